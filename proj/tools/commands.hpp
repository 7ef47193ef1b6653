#pragma once

// Subcommand implementations. Each returns a process exit code:
// 0 success, 2 invalid configuration or domain, 3 divergence, 4 I/O failure.

#include "config.hpp"
#include "output.hpp"

#include "steadynorm/schedule.hpp"
#include "steadynorm/simulate.hpp"
#include "steadynorm/steady.hpp"
#include "steadynorm/train.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace steadynorm::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kInvalid = 2, kDiverged = 3, kIoFailure = 4 };

struct RunOptions {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    bool quiet = false;
    unsigned workers = 0;
};

template <class Fn>
int guarded(std::ostream& err, Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const DomainError& e) {
        err << "error: " << e.what() << "\n";
        return kInvalid;
    } catch (const DivergenceError& e) {
        err << "diverged: " << e.what() << "\n";
        return kDiverged;
    } catch (const NonFiniteError& e) {
        err << "diverged: " << e.what() << "\n";
        return kDiverged;
    } catch (const IoError& e) {
        err << "io error: " << e.what() << "\n";
        return kIoFailure;
    } catch (const fs::filesystem_error& e) {
        err << "io error: " << e.what() << "\n";
        return kIoFailure;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
}

namespace detail {

inline RawConfig load_inputs(const RunOptions& o) {
    return o.config_path.empty() ? RawConfig{} : load_config_file(o.config_path);
}

inline RawConfig set_overrides(const std::vector<std::string>& sets) {
    RawConfig out;
    for (const auto& s : sets) out.push_back(parse_set(s));
    return out;
}

inline std::string fmt(double x, int digits = 6) {
    if (!std::isfinite(x)) return format_number(x);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

inline Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline double mean(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? std::numeric_limits<double>::quiet_NaN() : s / static_cast<double>(xs.size());
}

/// Sample standard deviation (n − 1); NaN below two values.
inline double sample_std(const std::vector<double>& xs) {
    if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    const double m = mean(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// predict

struct PredictOptions {
    double gamma = 0.0;
    std::optional<double> lambda;
    std::optional<double> eta;
    std::optional<double> alpha;
    std::optional<double> c_sq;
    bool json = false;
};

/// Closed-form quantities for whichever inputs are given.
inline Json predict_json(const PredictOptions& o) {
    if (!(o.gamma >= 0.0) || !std::isfinite(o.gamma)) throw DomainError("predict: gamma must be >= 0");
    const double c_sq = o.c_sq.value_or(1.0);
    Json j = Json::object();
    j["gamma"] = o.gamma;
    if (o.alpha) {
        if (!(*o.alpha > 0.0 && *o.alpha <= 1.0)) throw DomainError("predict: alpha must lie in (0, 1]");
        j["effective_lr"] = effective_lr(o.gamma, *o.alpha);
        if (o.c_sq) j["scionc_lambda"] = scionc_lambda(o.gamma, *o.alpha, *o.c_sq, LayerSpec{}, 0.0);
    }
    std::optional<double> lambda = o.lambda;
    std::optional<double> eta = o.eta;
    if (lambda && !eta) eta = o.gamma * *lambda;
    if (eta && !lambda && o.gamma > 0.0) lambda = *eta / o.gamma;
    // No updates: every steady-state quantity is zero.
    const Json zeros{{"c_sq", c_sq}, {"norm_sq_exact", 0.0}, {"norm_sq_approx", 0.0}, {"norm_exact", 0.0}, {"gap", 0.0}};
    if (lambda && o.gamma == 0.0) j["iid"] = zeros;
    if (lambda && o.gamma > 0.0) {
        const auto p = predict_iid(o.gamma, *lambda, c_sq);
        j["iid"] = Json{{"c_sq", c_sq},
                        {"norm_sq_exact", p.exact},
                        {"norm_sq_approx", p.approx},
                        {"norm_exact", std::sqrt(p.exact)},
                        {"gap", p.gap}};
    }
    if (eta && o.alpha && o.gamma == 0.0) j["momentum_normalized"] = zeros;
    if (eta && o.alpha && o.gamma > 0.0) {
        const auto p = predict_momentum_normalized(o.gamma, *eta, *o.alpha, c_sq, true);
        j["momentum_normalized"] = Json{{"c_sq", c_sq},
                                        {"norm_sq_exact", p.exact},
                                        {"norm_sq_approx", p.approx},
                                        {"norm_exact", std::sqrt(p.exact)},
                                        {"gap", p.gap}};
    }
    if (eta) {
        j["eta"] = *eta;
        if (*eta > 0.0 && *eta < 1.0) j["half_life"] = half_life(*eta);
    }
    if (lambda) j["lambda"] = *lambda;
    return j;
}

inline int cmd_predict(const PredictOptions& o, std::ostream& out) {
    const Json j = predict_json(o);
    if (o.json) {
        out << j.dump(2) << "\n";
        return kOk;
    }
    const auto line = [&](const std::string& name, double v) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-36s %s\n", name.c_str(), format_number(v).c_str());
        out << buf;
    };
    for (const auto& [k, v] : j.items()) {
        if (v.is_object()) {
            for (const auto& [kk, vv] : v.items()) line(k + "." + kk, vv.get<double>());
        } else {
            line(k, v.get<double>());
        }
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// simulate

/// Closed-form steady state for the configured process at peak γ and the final
/// α, or nothing when no closed form applies.
inline std::optional<SteadyPrediction> simulation_prediction(const SimConfig& c) {
    if (c.schedule.gamma_shape != GammaShape::Constant) return std::nullopt;
    const double gamma = c.schedule.gamma_peak;
    if (gamma == 0.0) return SteadyPrediction{};
    const double alpha = alpha_at(c.schedule, c.steps());
    const double eta = c.eta_at(gamma, alpha);
    const auto dim = static_cast<double>(c.dim);
    switch (c.update) {
        case UpdateKind::GaussianIid: return predict_iid(gamma, eta / gamma, dim);
        case UpdateKind::MomentumRmsNormalized: return predict_momentum_normalized(gamma, eta, alpha, dim, true);
        default: return std::nullopt;
    }
}

/// Runs one simulation config into `dir`; returns the summary document.
inline Json run_simulation(const Resolved& r, const fs::path& dir, unsigned workers, std::ostream* log) {
    const SimSetup setup = detail::as_config_error([&] { return build_simulation(r); });
    const SimConfig& c = setup.cfg;
    const Json config = config_json(simulate_schema(), r);
    ensure_dir(dir);

    const auto runs = simulate_each(c, setup.seeds, workers);
    const SimResult avg = average(runs);

    CsvWriter trace("steadynorm.sim_trace.v1", {"step", "norm", "gamma_t", "alpha_t"});
    for (std::size_t i = 0; i < avg.trace_step.size(); ++i) {
        trace.row({std::to_string(avg.trace_step[i]), format_number(avg.norm_trace[i]),
                   format_number(avg.gamma_trace[i]), format_number(avg.alpha_trace[i])});
    }
    atomic_write(dir / "trace.csv", trace.str());
    if (!avg.lags.empty()) {
        CsvWriter ac("steadynorm.sim_autocorr.v1", {"lag", "update_autocorr", "momentum_autocorr"});
        for (std::size_t i = 0; i < avg.lags.size(); ++i) {
            const double m = i < avg.momentum_autocorr.size() ? avg.momentum_autocorr[i]
                                                              : std::numeric_limits<double>::quiet_NaN();
            ac.row({std::to_string(avg.lags[i]), format_number(avg.autocorr[i]), format_number(m)});
        }
        atomic_write(dir / "autocorr.csv", ac.str());
    }

    std::vector<double> per_seed;
    Json seeds = Json::array();
    for (std::size_t i = 0; i < runs.size(); ++i) {
        per_seed.push_back(runs[i].steady_norm_mean);
        seeds.push_back(setup.seeds[i]);
    }
    Json measured{{"norm_mean", avg.steady_norm_mean},
                  {"norm_sq_mean", avg.steady_norm_sq_mean},
                  {"norm_mean_per_seed", per_seed},
                  {"norm_mean_std", detail::number_or_null(detail::sample_std(per_seed))},
                  {"update_sq_mean", detail::number_or_null(avg.update_sq_mean)},
                  {"momentum_norm_concentration", detail::number_or_null(avg.momentum_norm_concentration)}};
    Json summary{{"schema", "steadynorm.sim_summary.v1"},
                 {"steps", c.steps()},
                 {"warmup_steps", c.schedule.warmup_steps},
                 {"window_steps", c.window_steps()},
                 {"seeds", seeds},
                 {"eta_final", avg.eta_final},
                 {"measured", measured}};
    const auto pred = simulation_prediction(c);
    if (pred) {
        summary["prediction"] = Json{{"regime", std::string(to_string(pred->regime))},
                                     {"norm_sq", pred->norm_sq},
                                     {"norm_sq_approx", pred->approx},
                                     {"norm", std::sqrt(pred->norm_sq)},
                                     {"gap", pred->gap}};
        const double pn = std::sqrt(pred->norm_sq);
        summary["relative_error"] =
            Json{{"norm", detail::number_or_null(pn > 0.0 ? avg.steady_norm_mean / pn - 1.0 : 0.0)},
                 {"norm_sq", detail::number_or_null(pred->norm_sq > 0.0 ? avg.steady_norm_sq_mean / pred->norm_sq - 1.0
                                                                        : 0.0)}};
    } else {
        summary["prediction"] = nullptr;
        summary["relative_error"] = nullptr;
    }
    if (c.update == UpdateKind::MomentumRmsNormalized && c.schedule.gamma_peak > 0.0) {
        const double alpha = alpha_at(c.schedule, c.steps());
        summary["effective_lr"] = Json{{"nominal", effective_lr(gamma_at(c.schedule, c.steps()), alpha)},
                                       {"implied", tuc_estimate(avg, alpha, false)}};
    }
    write_json(dir / "summary.json", summary);
    write_json(dir / "manifest.json", manifest("simulate", config));

    if (log) {
        *log << "steps " << c.steps() << " (warmup " << c.schedule.warmup_steps << "), " << runs.size()
             << " seeds, window " << c.window_steps() << "\n";
        *log << "measured  E|theta|   " << detail::fmt(avg.steady_norm_mean) << "\n";
        *log << "measured  E|theta|^2 " << detail::fmt(avg.steady_norm_sq_mean) << "\n";
        if (pred) {
            *log << "predicted E|theta|^2 " << detail::fmt(pred->norm_sq) << " (" << to_string(pred->regime)
                 << ")\n";
            *log << "relative error       " << detail::fmt(summary["relative_error"]["norm_sq"].get<double>(), 4)
                 << "\n";
        }
        *log << "wrote " << dir.string() << "\n";
    }
    return summary;
}

inline int cmd_simulate(const RunOptions& o, std::ostream& out) {
    const Schema schema = simulate_schema();
    const Resolved r = resolve(schema, detail::load_inputs(o), detail::set_overrides(o.sets));
    const Json config = config_json(schema, r);
    detail::as_config_error([&] { return build_simulation(r); });
    const fs::path dir = output_dir(o.out, "simulate", git_blob_sha1(config.dump()));
    run_simulation(r, dir, o.workers, o.quiet ? nullptr : &out);
    return kOk;
}

// ---------------------------------------------------------------------------
// train

/// Runs one training config into `dir`; returns the summary document.
inline Json run_train(const Resolved& r, const fs::path& dir, std::ostream* log) {
    TrainSetup setup = detail::as_config_error([&] { return build_training(r); });
    const Json config = config_json(train_schema(), r);
    ensure_dir(dir);

    const TaskData data = gen_task(setup.task);
    ToyModel model = make_toy_model(setup.model);
    const std::int64_t total = setup.train.schedule.total_steps;
    if (log) {
        setup.train.on_record = [&](const MetricsRecord& rec) {
            *log << "step " << rec.step << "/" << total << "  loss " << detail::fmt(rec.loss, 5) << "  gamma "
                 << detail::fmt(rec.gamma, 4);
            if (std::isfinite(rec.val_accuracy)) *log << "  val_acc " << detail::fmt(rec.val_accuracy, 4);
            *log << "\n";
        };
    }
    const TrainResult res = detail::as_config_error([&] { return run_training(model, data, setup.train); });

    CsvWriter metrics("steadynorm.train_metrics.v1", metrics_columns(model));
    for (const auto& rec : res.records) metrics.row(metrics_row(model, rec));
    atomic_write(dir / "metrics.csv", metrics.str());

    Json layers = Json::array();
    if (!res.records.empty()) {
        const auto& last = res.records.back();
        for (std::size_t i = 0; i < model.params.size(); ++i) {
            layers.push_back(Json{{"name", model.specs[i].name},
                                  {"l2_norm", last.layers[i].l2_norm},
                                  {"family_norm", last.layers[i].family_norm},
                                  {"lambda", last.layers[i].lambda}});
        }
    }
    Json summary{{"schema", "steadynorm.train_summary.v1"},
                 {"optimizer", std::string(to_string(setup.train.optimizer))},
                 {"steps", total},
                 {"initial_loss", res.initial_loss},
                 {"diverged", res.diverged},
                 {"divergence_step", res.diverged ? Json(res.divergence_step) : Json(nullptr)},
                 {"divergence_message", res.diverged ? Json(res.divergence_message) : Json(nullptr)},
                 {"clamp_step", res.clamp_step ? Json(*res.clamp_step) : Json(nullptr)},
                 {"skipped_updates", res.skipped_updates}};
    if (!res.records.empty()) {
        const auto& last = res.records.back();
        summary["final"] = Json{{"step", last.step},
                                {"loss", last.loss},
                                {"val_loss", detail::number_or_null(last.val_loss)},
                                {"val_accuracy", detail::number_or_null(last.val_accuracy)},
                                {"sign_norm", last.sign_norm},
                                {"spectral_geomean", detail::number_or_null(last.spectral_geomean)}};
    } else {
        summary["final"] = nullptr;
    }
    if (res.diverged) {
        summary["train_eval"] = nullptr;
        summary["val_eval"] = nullptr;
    } else {
        summary["train_eval"] = Json{{"loss", res.train_eval.loss}, {"accuracy", res.train_eval.accuracy}};
        summary["val_eval"] = Json{{"loss", res.val_eval.loss}, {"accuracy", res.val_eval.accuracy}};
    }
    summary["layers"] = layers;
    write_json(dir / "summary.json", summary);
    write_json(dir / "manifest.json", manifest("train", config));

    if (log) {
        if (res.diverged) {
            *log << "diverged at step " << res.divergence_step << ": " << res.divergence_message << "\n";
        } else {
            *log << "train loss " << detail::fmt(res.train_eval.loss, 5) << "  accuracy "
                 << detail::fmt(res.train_eval.accuracy, 4) << "\n";
            *log << "val   loss " << detail::fmt(res.val_eval.loss, 5) << "  accuracy "
                 << detail::fmt(res.val_eval.accuracy, 4) << "\n";
        }
        *log << "wrote " << dir.string() << "\n";
    }
    return summary;
}

inline int cmd_train(const RunOptions& o, std::ostream& out, std::ostream& err) {
    const Schema schema = train_schema();
    const Resolved r = resolve(schema, detail::load_inputs(o), detail::set_overrides(o.sets));
    detail::as_config_error([&] { return build_training(r); });
    const Json config = config_json(schema, r);
    const fs::path dir = output_dir(o.out, "train", git_blob_sha1(config.dump()));
    const Json summary = run_train(r, dir, o.quiet ? nullptr : &out);
    if (summary["diverged"].get<bool>()) {
        err << "diverged: " << summary["divergence_message"].get<std::string>() << "\n";
        return kDiverged;
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// sweep

inline std::vector<std::string> sweep_metric_names(const std::string& run) {
    if (run == "simulate") return {"norm_mean", "norm_sq_mean", "rel_error_norm_sq"};
    return {"final_loss", "final_val_loss", "final_val_accuracy", "train_accuracy", "final_sign_norm",
            "final_spectral_geomean"};
}

/// Per-run scalar metrics from a run summary; missing values are NaN.
inline std::vector<double> sweep_metrics(const std::string& run, const Json& s) {
    const auto num = [](const Json& j) {
        return j.is_number() ? j.get<double>() : std::numeric_limits<double>::quiet_NaN();
    };
    const auto at = [&](const Json& j, const char* a, const char* b) {
        return j.contains(a) && j[a].is_object() && j[a].contains(b) ? num(j[a][b])
                                                                       : std::numeric_limits<double>::quiet_NaN();
    };
    if (run == "simulate") {
        return {at(s, "measured", "norm_mean"), at(s, "measured", "norm_sq_mean"),
                at(s, "relative_error", "norm_sq")};
    }
    return {at(s, "final", "loss"),           at(s, "final", "val_loss"),  at(s, "final", "val_accuracy"),
            at(s, "train_eval", "accuracy"), at(s, "final", "sign_norm"), at(s, "final", "spectral_geomean")};
}

inline std::string run_dir_name(std::size_t cell, std::int64_t seed) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "cell%03zu-seed%lld", cell, static_cast<long long>(seed));
    return buf;
}

inline int cmd_sweep(const RunOptions& o, std::ostream& out) {
    if (o.config_path.empty()) throw ConfigError("sweep: --config is required");
    const SweepPlan plan = plan_sweep(load_config_file(o.config_path), detail::set_overrides(o.sets));
    const auto cells = grid_cells(plan);

    struct Job {
        std::size_t cell;
        std::int64_t seed;
        Resolved config;
    };
    std::vector<Job> jobs;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        for (auto seed : plan.seeds) {
            Job j{ci, seed, cell_config(plan, cells[ci], seed)};
            validate_run(plan.run, j.config);
            jobs.push_back(std::move(j));
        }
    }

    const Json doc = sweep_json(plan);
    const fs::path dir = output_dir(o.out, "sweep", git_blob_sha1(doc.dump()));
    ensure_dir(dir);
    write_json(dir / "manifest.json", manifest("sweep", doc));

    const auto names = sweep_metric_names(plan.run);
    std::vector<std::string> status(jobs.size());
    std::vector<std::string> message(jobs.size());
    std::vector<std::vector<double>> values(jobs.size());
    std::mutex log_mu;
    parallel_for(jobs.size(), o.workers, [&](std::size_t i) {
        const Job& job = jobs[i];
        const fs::path run_dir = dir / "runs" / run_dir_name(job.cell, job.seed);
        try {
            const Json s = plan.run == "simulate" ? run_simulation(job.config, run_dir, 1, nullptr)
                                                  : run_train(job.config, run_dir, nullptr);
            if (s.contains("diverged") && s["diverged"].get<bool>()) {
                status[i] = "diverged";
                message[i] = s["divergence_message"].get<std::string>();
            } else {
                status[i] = "ok";
                values[i] = sweep_metrics(plan.run, s);
            }
        } catch (const std::exception& e) {
            status[i] = "failed";
            message[i] = e.what();
            try {
                write_json(run_dir / "error.json", Json{{"status", "failed"}, {"error", message[i]}});
            } catch (const std::exception&) {
            }
        }
        if (!o.quiet) {
            std::lock_guard lock(log_mu);
            out << "[" << run_dir_name(job.cell, job.seed) << "] " << status[i] << "\n";
        }
    });

    std::vector<std::string> axis_keys;
    for (const auto& a : plan.axes) axis_keys.push_back(a.key);

    std::vector<std::string> run_header{"cell", "seed", "status"};
    run_header.insert(run_header.end(), axis_keys.begin(), axis_keys.end());
    run_header.insert(run_header.end(), names.begin(), names.end());
    CsvWriter runs_csv("steadynorm.sweep_runs.v1", run_header);
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        std::vector<std::string> row{std::to_string(jobs[i].cell), std::to_string(jobs[i].seed), status[i]};
        row.insert(row.end(), cells[jobs[i].cell].begin(), cells[jobs[i].cell].end());
        for (std::size_t m = 0; m < names.size(); ++m) {
            row.push_back(values[i].empty() || !std::isfinite(values[i][m]) ? "NA" : format_number(values[i][m]));
        }
        runs_csv.row(row);
    }
    atomic_write(dir / "runs.csv", runs_csv.str());

    std::vector<std::string> agg_header{"cell"};
    agg_header.insert(agg_header.end(), axis_keys.begin(), axis_keys.end());
    agg_header.push_back("n_runs");
    agg_header.push_back("n_ok");
    for (const auto& n : names) {
        agg_header.push_back(n + "_mean");
        agg_header.push_back(n + "_std");
    }
    CsvWriter agg("steadynorm.sweep_aggregate.v1", agg_header);
    std::size_t failed = 0;
    for (std::size_t ci = 0; ci < cells.size(); ++ci) {
        std::vector<std::string> row{std::to_string(ci)};
        row.insert(row.end(), cells[ci].begin(), cells[ci].end());
        std::size_t n_runs = 0;
        std::size_t n_ok = 0;
        std::vector<std::vector<double>> cols(names.size());
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (jobs[i].cell != ci) continue;
            ++n_runs;
            if (status[i] != "ok") {
                ++failed;
                continue;
            }
            ++n_ok;
            for (std::size_t m = 0; m < names.size(); ++m) {
                if (std::isfinite(values[i][m])) cols[m].push_back(values[i][m]);
            }
        }
        row.push_back(std::to_string(n_runs));
        row.push_back(std::to_string(n_ok));
        for (const auto& col : cols) {
            row.push_back(col.empty() ? "NA" : format_number(detail::mean(col)));
            row.push_back(col.size() < 2 ? "NA" : format_number(detail::sample_std(col)));
        }
        agg.row(row);
    }
    atomic_write(dir / "aggregate.csv", agg.str());

    if (!o.quiet) {
        out << cells.size() << " cells x " << plan.seeds.size() << " seeds, " << (jobs.size() - failed) << " of "
            << jobs.size() << " runs ok\n";
        for (std::size_t i = 0; i < jobs.size(); ++i) {
            if (status[i] != "ok") out << "  " << run_dir_name(jobs[i].cell, jobs[i].seed) << ": " << message[i] << "\n";
        }
        out << "wrote " << dir.string() << "\n";
    }
    return kOk;
}

// ---------------------------------------------------------------------------
// report

namespace detail {

inline void print_table(std::ostream& out, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width;
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (width.size() <= i) width.push_back(0);
            width[i] = std::max(width[i], r[i].size());
        }
    }
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) {
            out << r[i];
            if (i + 1 < r.size()) out << std::string(width[i] - r[i].size() + 2, ' ');
        }
        out << "\n";
    }
}

inline int report_simulation(const fs::path& dir, std::ostream& out) {
    const CsvTable trace = read_csv(dir / "trace.csv");
    const Json summary = read_json(dir / "summary.json");
    const auto steps = trace.numbers("step");
    const auto norm = trace.numbers("norm");
    const auto gamma = trace.numbers("gamma_t");
    const auto alpha = trace.numbers("alpha_t");
    const double eta = summary.value("eta_final", 0.0);
    const double th = eta > 0.0 && eta < 1.0 ? half_life(eta) : std::numeric_limits<double>::quiet_NaN();
    const bool predicted = summary.contains("prediction") && summary["prediction"].is_object();
    const double pn = predicted ? summary["prediction"]["norm"].get<double>() : 0.0;

    CsvWriter rep("steadynorm.sim_report.v1", {"step", "half_lives", "norm", "norm_over_predicted", "gamma_t", "alpha_t"});
    for (std::size_t i = 0; i < steps.size(); ++i) {
        rep.row({format_number(steps[i]), std::isfinite(th) ? format_number(steps[i] / th) : "NA",
                 format_number(norm[i]), predicted && pn > 0.0 ? format_number(norm[i] / pn) : "NA",
                 format_number(gamma[i]), format_number(alpha[i])});
    }
    atomic_write(dir / "report.csv", rep.str());

    std::vector<std::vector<std::string>> rows{{"quantity", "value"}};
    rows.push_back({"steps", std::to_string(summary["steps"].get<std::int64_t>())});
    rows.push_back({"half_life", fmt(th)});
    rows.push_back({"measured E|theta|", fmt(summary["measured"]["norm_mean"].get<double>())});
    rows.push_back({"measured E|theta|^2", fmt(summary["measured"]["norm_sq_mean"].get<double>())});
    if (predicted) {
        rows.push_back({"predicted E|theta|^2", fmt(summary["prediction"]["norm_sq"].get<double>())});
        rows.push_back({"relative error", fmt(summary["relative_error"]["norm_sq"].get<double>(), 4)});
    }
    print_table(out, rows);
    out << "wrote " << (dir / "report.csv").string() << "\n";
    return kOk;
}

/// Per-layer family norms relative to their plateau mean over [T/4, T/2].
inline int report_training(const fs::path& dir, const Json& man, std::ostream& out) {
    const CsvTable metrics = read_csv(dir / "metrics.csv");
    const auto steps = metrics.numbers("step");
    const double total = man["config"]["schedule"]["total_steps"].get<double>();
    std::vector<std::string> layers;
    const std::string suffix = ".family_norm";
    for (const auto& h : metrics.header) {
        if (h.size() > suffix.size() && h.compare(h.size() - suffix.size(), suffix.size(), suffix) == 0) {
            layers.push_back(h.substr(0, h.size() - suffix.size()));
        }
    }
    std::vector<std::string> header{"step", "loss", "gamma", "val_accuracy"};
    std::vector<std::vector<double>> cols{steps, metrics.numbers("loss"), metrics.numbers("gamma"),
                                          metrics.numbers("val_accuracy")};
    std::vector<std::vector<std::string>> rows{{"layer", "plateau", "final", "final/plateau", "min", "max"}};
    for (const auto& l : layers) {
        const auto v = metrics.numbers(l + suffix);
        std::vector<double> plateau;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (steps[i] >= 0.25 * total && steps[i] <= 0.5 * total) plateau.push_back(v[i]);
        }
        const double p = mean(plateau);
        std::vector<double> rel(v.size());
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t i = 0; i < v.size(); ++i) {
            rel[i] = p > 0.0 ? v[i] / p : std::numeric_limits<double>::quiet_NaN();
            if (steps[i] > 0.5 * total) {
                lo = std::min(lo, rel[i]);
                hi = std::max(hi, rel[i]);
            }
        }
        header.push_back(l + ".family_norm_rel");
        cols.push_back(rel);
        rows.push_back({l, fmt(p, 4), v.empty() ? "NA" : fmt(v.back(), 4), rel.empty() ? "NA" : fmt(rel.back(), 4),
                        fmt(lo, 4), fmt(hi, 4)});
    }
    CsvWriter rep("steadynorm.train_report.v1", header);
    for (std::size_t i = 0; i < steps.size(); ++i) {
        std::vector<double> row;
        for (const auto& c : cols) row.push_back(c[i]);
        rep.row(row);
    }
    atomic_write(dir / "report.csv", rep.str());
    print_table(out, rows);
    out << "wrote " << (dir / "report.csv").string() << "\n";
    return kOk;
}

inline int report_sweep(const fs::path& dir, std::ostream& out) {
    const CsvTable agg = read_csv(dir / "aggregate.csv");
    std::vector<std::vector<std::string>> rows{agg.header};
    rows.insert(rows.end(), agg.rows.begin(), agg.rows.end());
    print_table(out, rows);
    return kOk;
}

}  // namespace detail

inline int cmd_report(const std::string& path, std::ostream& out) {
    const fs::path dir(path);
    if (!fs::is_directory(dir)) throw IoError("report: '" + path + "' is not a directory");
    const Json man = read_json(dir / "manifest.json");
    const std::string sub = man.value("subcommand", "");
    if (sub == "simulate") return detail::report_simulation(dir, out);
    if (sub == "train") return detail::report_training(dir, man, out);
    if (sub == "sweep") return detail::report_sweep(dir, out);
    throw IoError("report: unknown run kind '" + sub + "' in " + (dir / "manifest.json").string());
}

}  // namespace steadynorm::cli
