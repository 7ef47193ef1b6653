#include "commands.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

using namespace steadynorm::cli;

void add_run_options(CLI::App* cmd, RunOptions& o) {
    cmd->add_option("-c,--config", o.config_path, "INI or JSON config (a run manifest also works)");
    cmd->add_option("-s,--set", o.sets, "Override a key, as section.key=value (repeatable)");
    cmd->add_option("-o,--out", o.out, "Output directory (default: $STEADYNORM_OUTPUT_ROOT/<kind>-<hash>)");
    cmd->add_flag("-q,--quiet", o.quiet, "Suppress progress output");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Steady-state weight norms: closed-form predictions, simulations and toy training runs"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "steadynorm 1.0");

    PredictOptions predict;
    auto* p = app.add_subcommand("predict", "Closed-form steady-state quantities");
    p->add_option("--gamma", predict.gamma, "Learning rate")->required();
    p->add_option("--lambda", predict.lambda, "Weight decay");
    p->add_option("--eta", predict.eta, "Per-step decay rate (defaults to gamma*lambda)");
    p->add_option("--alpha", predict.alpha, "Momentum coefficient in (0, 1]");
    p->add_option("--c-sq", predict.c_sq, "Update norm square; also the ScionC target for scionc_lambda");
    p->add_flag("--json", predict.json, "Print JSON");

    RunOptions sim;
    auto* s = app.add_subcommand("simulate", "Random-walk simulation of the weight-norm recursion");
    add_run_options(s, sim);
    s->add_option("-j,--workers", sim.workers, "Worker threads (0: all cores)");

    RunOptions train;
    std::string optimizer;
    auto* t = app.add_subcommand("train", "Train the toy model");
    add_run_options(t, train);
    t->add_option("--optimizer", optimizer, "adamw, adamc, renorm-adamw, scion or scionc");

    RunOptions sweep;
    auto* w = app.add_subcommand("sweep", "Grid of simulate or train runs over several seeds");
    add_run_options(w, sweep);
    w->get_option("--config")->required();
    w->add_option("-j,--workers", sweep.workers, "Worker threads (0: all cores)");

    std::string report_dir;
    auto* r = app.add_subcommand("report", "Summarize a run or sweep directory");
    r->add_option("dir", report_dir, "Run or sweep directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kInvalid;
    }

    if (p->parsed()) return guarded(std::cerr, [&] { return cmd_predict(predict, std::cout); });
    if (s->parsed()) return guarded(std::cerr, [&] { return cmd_simulate(sim, std::cout); });
    if (t->parsed()) {
        if (!optimizer.empty()) train.sets.push_back("train.optimizer=" + optimizer);
        return guarded(std::cerr, [&] { return cmd_train(train, std::cout, std::cerr); });
    }
    if (w->parsed()) return guarded(std::cerr, [&] { return cmd_sweep(sweep, std::cout); });
    if (r->parsed()) return guarded(std::cerr, [&] { return cmd_report(report_dir, std::cout); });
    return kInvalid;
}
