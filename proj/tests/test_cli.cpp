#include <gtest/gtest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct Outcome {
    int code = -1;
    std::string out;
};

Outcome run(const std::string& args, const std::string& env = "") {
    const std::string cmd = env + (env.empty() ? "" : " ") + STEADYNORM_CLI_PATH + " " + args + " 2>&1";
    Outcome o;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) return o;
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) o.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return o;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("steadynorm_cli_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream(p, std::ios::binary) << text;
}

/// Data rows of a CSV written by the tool, split into fields.
std::vector<std::vector<std::string>> csv_rows(const fs::path& p, std::vector<std::string>* header = nullptr) {
    std::istringstream in(slurp(p));
    std::string line;
    std::vector<std::vector<std::string>> rows;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> f;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) f.push_back(cell);
        if (first) {
            if (header) *header = f;
            first = false;
        } else {
            rows.push_back(f);
        }
    }
    return rows;
}

std::size_t col(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    ADD_FAILURE() << "missing column " << name;
    return 0;
}

const std::string kSmallSim =
    "simulate -q --set sim.dim=50 --set sim.seeds=2 --set sim.protocol=explicit "
    "--set schedule.total_steps=800 --set schedule.gamma_peak=0.01 --set sim.decay=1";

const std::string kSmallTrain =
    "train -q --set schedule.total_steps=60 --set schedule.warmup_steps=5 --set train.log_every=20 "
    "--set task.samples=1024";

}  // namespace

TEST(Cli, PredictPrintsReferenceValues) {
    const auto o = run("predict --gamma 0.01 --alpha 0.1 --c-sq 2.375");
    EXPECT_EQ(o.code, 0) << o.out;
    EXPECT_NE(o.out.find("scionc_lambda                        0.04\n"), std::string::npos) << o.out;
    EXPECT_NE(o.out.find("effective_lr                         0.04358"), std::string::npos) << o.out;
}

TEST(Cli, PredictJsonAndUsageErrors) {
    const auto o = run("predict --gamma 0.001 --lambda 1 --c-sq 1000 --json");
    EXPECT_EQ(o.code, 0) << o.out;
    EXPECT_NE(o.out.find("\"norm_sq_exact\": 0.5002501250625312"), std::string::npos) << o.out;
    EXPECT_EQ(run("predict --alpha 0.1").code, 2);
    EXPECT_EQ(run("predict --gamma abc").code, 2);
    EXPECT_EQ(run("predict --gamma 0.1 --alpha 2").code, 2);
    EXPECT_EQ(run("nosuch").code, 2);
    EXPECT_EQ(run("").code, 2);
    EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, SimulateWritesArtifactsAndReproducesFromManifest) {
    const fs::path dir = scratch("sim");
    auto o = run(kSmallSim + " --out " + (dir / "a").string());
    ASSERT_EQ(o.code, 0) << o.out;
    for (const char* f : {"trace.csv", "summary.json", "manifest.json"}) EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / "trace.csv").rfind("# schema: steadynorm.sim_trace.v1\nstep,norm,gamma_t,alpha_t\n", 0), 0U);
    EXPECT_EQ(csv_rows(dir / "a" / "trace.csv").size(), 800U);

    o = run("simulate -q --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "b").string());
    ASSERT_EQ(o.code, 0) << o.out;
    for (const char* f : {"trace.csv", "summary.json", "manifest.json"}) {
        EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
    }
    const std::string manifest = slurp(dir / "a" / "manifest.json");
    EXPECT_NE(manifest.find("\"schema_version\": 1"), std::string::npos);
    EXPECT_NE(manifest.find("\"config_hash\": \""), std::string::npos);
}

TEST(Cli, DefaultOutputRootFromEnvironment) {
    const fs::path root = scratch("root");
    const auto o = run(kSmallSim, "STEADYNORM_OUTPUT_ROOT=" + root.string());
    ASSERT_EQ(o.code, 0) << o.out;
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(root)) runs.push_back(e.path());
    ASSERT_EQ(runs.size(), 1U);
    EXPECT_EQ(runs[0].filename().string().rfind("simulate-", 0), 0U);
    EXPECT_EQ(runs[0].filename().string().size(), std::string("simulate-").size() + 12);
}

TEST(Cli, ConfigFilesAndErrors) {
    const fs::path dir = scratch("cfg");
    write(dir / "ok.ini", "[sim]\ndim = 50\nseeds = 1\nprotocol = explicit\n[schedule]\ntotal_steps = 800\ngamma_peak = 0.01\n");
    EXPECT_EQ(run("simulate -q --config " + (dir / "ok.ini").string() + " --out " + (dir / "o").string()).code, 0);
    write(dir / "bad.ini", "[sim]\ndimension = 50\n");
    auto o = run("simulate -q --config " + (dir / "bad.ini").string() + " --out " + (dir / "o2").string());
    EXPECT_EQ(o.code, 2);
    EXPECT_NE(o.out.find("unknown key 'sim.dimension'"), std::string::npos) << o.out;
    EXPECT_FALSE(fs::exists(dir / "o2"));
    EXPECT_EQ(run("simulate -q --config " + (dir / "missing.ini").string()).code, 2);
    EXPECT_EQ(run("simulate -q --set sim.protocol=explicit --set schedule.total_steps=0").code, 2);
    EXPECT_EQ(run("simulate -q --set sim.update=brownian").code, 2);
    EXPECT_EQ(run("train -q --optimizer nosuch").code, 2);
}

TEST(Cli, UnwritableOutputIsIoError) {
    const fs::path dir = scratch("io");
    write(dir / "file", "x");
    const auto o = run(kSmallSim + " --out " + (dir / "file" / "run").string());
    EXPECT_EQ(o.code, 4) << o.out;
}

TEST(Cli, TrainWritesMetricsAndReport) {
    const fs::path dir = scratch("train");
    auto o = run(kSmallTrain + " --optimizer scion --out " + (dir / "t").string());
    ASSERT_EQ(o.code, 0) << o.out;
    std::vector<std::string> header;
    const auto rows = csv_rows(dir / "t" / "metrics.csv", &header);
    ASSERT_EQ(rows.size(), 3U);
    EXPECT_EQ(rows.back()[col(header, "step")], "60");
    EXPECT_EQ(slurp(dir / "t" / "metrics.csv").rfind("# schema: steadynorm.train_metrics.v1\n", 0), 0U);
    EXPECT_NE(slurp(dir / "t" / "manifest.json").find("\"optimizer\": \"scion\""), std::string::npos);

    o = run("report " + (dir / "t").string());
    EXPECT_EQ(o.code, 0) << o.out;
    EXPECT_NE(o.out.find("hidden0.weight"), std::string::npos) << o.out;
    EXPECT_TRUE(fs::exists(dir / "t" / "report.csv"));
}

std::vector<std::string> lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string l; std::getline(in, l);) out.push_back(l);
    return out;
}

TEST(Cli, OptimizerFlagOnlyChangesOptimizerFields) {
    const fs::path dir = scratch("optimizers");
    ASSERT_EQ(run(kSmallTrain + " --optimizer scion --out " + (dir / "a").string()).code, 0);
    ASSERT_EQ(run(kSmallTrain + " --optimizer scionc --out " + (dir / "b").string()).code, 0);
    const auto a = lines(slurp(dir / "a" / "manifest.json"));
    const auto b = lines(slurp(dir / "b" / "manifest.json"));
    ASSERT_EQ(a.size(), b.size());
    std::vector<std::string> differing;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i] != b[i]) differing.push_back(a[i]);
    }
    ASSERT_EQ(differing.size(), 2U);
    EXPECT_NE(differing[0].find("config_hash"), std::string::npos);
    EXPECT_NE(differing[1].find("\"optimizer\""), std::string::npos);
}

TEST(Cli, DefaultRunLowersLossAndRenormPassesNormCheck) {
    const fs::path dir = scratch("defaults");
    ASSERT_EQ(run("train -q --out " + (dir / "d").string()).code, 0);
    std::vector<std::string> header;
    const auto rows = csv_rows(dir / "d" / "metrics.csv", &header);
    ASSERT_GE(rows.size(), 2U);
    const std::size_t loss = col(header, "loss");
    EXPECT_LT(std::stod(rows.back()[loss]), std::stod(rows.front()[loss]));

    const auto o = run(kSmallTrain + " --optimizer renorm-adamw --set train.check_norm_law=true --out " +
                       (dir / "r").string());
    EXPECT_EQ(o.code, 0) << o.out;
}

TEST(Cli, ProgressLinesUnlessQuiet) {
    const fs::path dir = scratch("progress");
    std::string args = kSmallTrain;
    args.replace(args.find(" -q"), 3, "");
    const auto o = run(args + " --out " + (dir / "t").string());
    ASSERT_EQ(o.code, 0) << o.out;
    EXPECT_NE(o.out.find("step 20/60"), std::string::npos) << o.out;
    EXPECT_NE(o.out.find("step 60/60"), std::string::npos) << o.out;
}

TEST(Cli, DivergenceExitsThreeAndKeepsArtifacts) {
    const fs::path dir = scratch("diverge");
    const auto o = run(kSmallTrain + " --optimizer adamw --set schedule.gamma_peak=1e200 --out " + (dir / "t").string());
    EXPECT_EQ(o.code, 3) << o.out;
    EXPECT_NE(slurp(dir / "t" / "summary.json").find("\"diverged\": true"), std::string::npos);
}

TEST(Cli, SweepAggregatesMatchPerRunFiles) {
    const fs::path dir = scratch("sweep");
    write(dir / "s.ini",
          "[sweep]\nrun = train\nseeds = 0, 1\n[schedule]\ntotal_steps = 40\nwarmup_steps = 4\n"
          "[task]\nsamples = 1024\n[train]\nlog_every = 20\n[grid]\ntrain.optimizer = scion | scionc\n"
          "schedule.gamma_peak = 0.02 | 1e200\n");
    const auto o = run("sweep -q --config " + (dir / "s.ini").string() + " --out " + (dir / "out").string());
    ASSERT_EQ(o.code, 0) << o.out;

    std::vector<std::string> header;
    const auto agg = csv_rows(dir / "out" / "aggregate.csv", &header);
    ASSERT_EQ(agg.size(), 4U);
    const auto c_gamma = col(header, "schedule.gamma_peak");
    const auto c_opt = col(header, "train.optimizer");
    const auto c_mean = col(header, "final_loss_mean");
    const auto c_std = col(header, "final_loss_std");
    const auto c_ok = col(header, "n_ok");
    for (std::size_t ci = 0; ci < agg.size(); ++ci) {
        const auto& row = agg[ci];
        if (row[c_gamma] == "1e+200") {
            // Every run of this cell diverges, so its statistics are missing.
            EXPECT_EQ(row[c_ok], "0");
            EXPECT_EQ(row[c_mean], "NA");
            EXPECT_EQ(row[c_std], "NA");
            continue;
        }
        ASSERT_EQ(row[c_ok], "2") << row[c_opt];
        std::vector<double> losses;
        for (int seed : {0, 1}) {
            char name[64];
            std::snprintf(name, sizeof name, "cell%03zu-seed%d", ci, seed);
            std::vector<std::string> mh;
            const auto m = csv_rows(dir / "out" / "runs" / name / "metrics.csv", &mh);
            ASSERT_FALSE(m.empty()) << name;
            losses.push_back(std::stod(m.back()[col(mh, "loss")]));
        }
        const double mean = 0.5 * (losses[0] + losses[1]);
        const double sd = std::abs(losses[0] - losses[1]) / std::sqrt(2.0);
        EXPECT_NEAR(std::stod(row[c_mean]), mean, 1e-12 * std::abs(mean));
        EXPECT_NEAR(std::stod(row[c_std]), sd, 1e-9 * std::max(sd, 1e-12));
    }
    EXPECT_TRUE(fs::exists(dir / "out" / "runs.csv"));
    EXPECT_TRUE(fs::exists(dir / "out" / "manifest.json"));
    EXPECT_EQ(run("report " + (dir / "out").string()).code, 0);
}

TEST(Cli, SweepRejectsEmptyGrid) {
    const fs::path dir = scratch("sweep_empty");
    write(dir / "s.ini", "[sweep]\nrun = simulate\n[sim]\ndim = 10\n");
    const auto o = run("sweep -q --config " + (dir / "s.ini").string() + " --out " + (dir / "out").string());
    EXPECT_EQ(o.code, 2) << o.out;
    EXPECT_NE(o.out.find("grid is empty"), std::string::npos) << o.out;
    EXPECT_EQ(run("sweep -q").code, 2);
}

TEST(Cli, SimulationSweepReproducesFromManifest) {
    const fs::path dir = scratch("sweep_sim");
    write(dir / "s.ini",
          "[sweep]\nrun = simulate\nseeds = 3\n[sim]\ndim = 20\nseeds = 1\nprotocol = explicit\n"
          "[schedule]\ntotal_steps = 800\ngamma_peak = 0.01\n[grid]\nsim.decay = 1 | 2\n");
    ASSERT_EQ(run("sweep -q --config " + (dir / "s.ini").string() + " --out " + (dir / "a").string()).code, 0);
    ASSERT_EQ(run("sweep -q --config " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "b").string()).code,
              0);
    EXPECT_EQ(slurp(dir / "a" / "aggregate.csv"), slurp(dir / "b" / "aggregate.csv"));
    EXPECT_EQ(slurp(dir / "a" / "manifest.json"), slurp(dir / "b" / "manifest.json"));
}

TEST(Cli, ReportMissingDirectoryIsIoError) {
    EXPECT_EQ(run("report /nonexistent/run").code, 4);
    const fs::path dir = scratch("report_bad");
    EXPECT_EQ(run("report " + dir.string()).code, 4);
}
