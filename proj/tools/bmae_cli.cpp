// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

// Command-line front end. Talks to the library only through its C API.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bmae/bmae.h"

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

int exit_code(bmae_status s) {
    switch (s) {
    case BMAE_OK: return kExitOk;
    case BMAE_ERR_CONFIG: return kExitConfig;
    default: return kExitRuntime;
    }
}

int report_failure(const char* what, bmae_status s) {
    std::cerr << "bmae: " << what << ": " << bmae_last_error() << "\n";
    return exit_code(s);
}

std::string config_string(const bmae_config* cfg, const char* key) {
    size_t needed = 0;
    bmae_config_get(cfg, key, nullptr, 0, &needed);
    std::string out(needed, '\0');
    if (bmae_config_get(cfg, key, out.data(), out.size(), &needed) != BMAE_OK)
        return {};
    out.resize(needed - 1);
    return out;
}

struct ConfigHandle {
    bmae_config* ptr = nullptr;
    ~ConfigHandle() { bmae_config_free(ptr); }
};

struct LedgerHandle {
    bmae_ledger* ptr = nullptr;
    ~LedgerHandle() { bmae_ledger_free(ptr); }
};

void print_summary(const bmae_ledger* ledger) {
    int phases = 0;
    bmae_ledger_phases(ledger, &phases);
    std::printf("accuracy matrix (row = after task, column = task):\n");
    for (int t = 0; t < phases; ++t) {
        std::printf("  %2d:", t);
        for (int k = 0; k <= t; ++k) {
            double a = 0;
            bmae_ledger_accuracy(ledger, t, k, &a);
            std::printf(" %6.2f", 100.0 * a);
        }
        std::printf("\n");
    }
    double avg = 0, last = 0, f = 0;
    if (bmae_ledger_summary(ledger, &avg, &last, &f) == BMAE_OK)
        std::printf("avg %.2f  last %.2f  forgetting %.2f\n", 100.0 * avg, 100.0 * last, 100.0 * f);
    double mse = 0;
    if (phases > 0 && bmae_ledger_replay_mse(ledger, phases - 1, &mse) == BMAE_OK)
        std::printf("replay reconstruction mse %.6f\n", mse);
    double density = 0;
    if (bmae_ledger_feature_density(ledger, &density) == BMAE_OK)
        std::printf("feature density %.4f\n", density);
}

struct RunOptions {
    std::string config;
    std::string out;
    std::vector<std::string> overrides;
    long long seed = -1;
    bool resume = false;
};

int cmd_run(const RunOptions& o) {
    ConfigHandle cfg;
    bmae_status s;
    if (!o.config.empty()) {
        s = bmae_config_load(o.config.c_str(), &cfg.ptr);
    } else if (o.resume && !o.out.empty() && fs::exists(fs::path(o.out) / "config.resolved.cfg")) {
        s = bmae_config_load((fs::path(o.out) / "config.resolved.cfg").string().c_str(), &cfg.ptr);
    } else {
        s = bmae_config_new(&cfg.ptr);
    }
    if (s != BMAE_OK)
        return report_failure("loading config", s);
    for (const auto& kv : o.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            std::cerr << "bmae: --set expects key=value, got '" << kv << "'\n";
            return kExitConfig;
        }
        if ((s = bmae_config_set(cfg.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str())) != BMAE_OK)
            return report_failure("applying --set", s);
    }
    if (o.seed >= 0 &&
        (s = bmae_config_set(cfg.ptr, "experiment.seed", std::to_string(o.seed).c_str())) != BMAE_OK)
        return report_failure("applying --seed", s);
    if ((s = bmae_config_validate(cfg.ptr)) != BMAE_OK)
        return report_failure("invalid configuration", s);

    std::string out = o.out;
    if (out.empty()) {
        const char* root = std::getenv("BMAE_OUTPUT_ROOT");
        out = (fs::path(root && *root ? root : "runs") /
               (config_string(cfg.ptr, "experiment.name") + "-seed" + config_string(cfg.ptr, "experiment.seed")))
                  .string();
    }
    LedgerHandle ledger;
    if ((s = bmae_run(cfg.ptr, out.c_str(), o.resume ? 1 : 0, &ledger.ptr)) != BMAE_OK)
        return report_failure("run failed", s);
    print_summary(ledger.ptr);
    std::printf("outputs in %s\n", out.c_str());
    return kExitOk;
}

int cmd_eval(const std::string& checkpoint) {
    size_t count = 0;
    bmae_status s = bmae_eval(checkpoint.c_str(), nullptr, 0, &count);
    if (s != BMAE_OK)
        return report_failure("eval failed", s);
    std::vector<double> acc(count);
    if ((s = bmae_eval(checkpoint.c_str(), acc.data(), acc.size(), &count)) != BMAE_OK)
        return report_failure("eval failed", s);
    for (size_t k = 0; k < acc.size(); ++k)
        std::printf("task %zu: %.2f\n", k, 100.0 * acc[k]);
    return kExitOk;
}

int cmd_inspect(const std::string& path) {
    size_t needed = 0;
    bmae_status s = bmae_store_inspect(path.c_str(), nullptr, 0, &needed);
    if (s != BMAE_OK && s != BMAE_ERR_CORRUPT)
        return report_failure("inspect-store", s);
    std::string text(needed, '\0');
    s = bmae_store_inspect(path.c_str(), text.data(), text.size(), &needed);
    std::fputs(text.c_str(), stdout);
    if (s == BMAE_ERR_CORRUPT) {
        std::cerr << "bmae: " << path << " failed format validation\n";
        return kExitRuntime;
    }
    return s == BMAE_OK ? kExitOk : report_failure("inspect-store", s);
}

int cmd_reconstruct(const std::string& store, const std::string& checkpoint, const std::string& out) {
    size_t written = 0;
    const bmae_status s = bmae_reconstruct(store.c_str(), checkpoint.c_str(), out.c_str(), &written);
    if (s != BMAE_OK)
        return report_failure("reconstruct failed", s);
    std::printf("wrote %zu images to %s\n", written, out.c_str());
    return kExitOk;
}

int cmd_report(const std::string& run, const std::string& out) {
    fs::path reports = run;
    if (fs::exists(reports / "reports" / "accuracy_matrix.csv"))
        reports /= "reports";
    LedgerHandle ledger;
    bmae_status s = bmae_ledger_load(reports.string().c_str(), &ledger.ptr);
    if (s != BMAE_OK)
        return report_failure("report", s);
    print_summary(ledger.ptr);
    if (!out.empty()) {
        if ((s = bmae_ledger_write_reports(ledger.ptr, out.c_str())) != BMAE_OK)
            return report_failure("writing reports", s);
        std::printf("reports written to %s\n", out.c_str());
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bilateral masked-autoencoder class-incremental learner"};
    app.require_subcommand(1);
    bool verbose = false;
    bool quiet = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Only log errors");
    app.set_version_flag("--version", std::string(bmae_version()));

    RunOptions run;
    auto* run_cmd = app.add_subcommand("run", "Train on a task stream and write ledger, checkpoints and reports");
    run_cmd->add_option("-c,--config", run.config, "Config file (key = value lines)");
    run_cmd->add_option("--seed", run.seed, "Overrides experiment.seed");
    run_cmd->add_option("-o,--out", run.out, "Output directory (default $BMAE_OUTPUT_ROOT/<name>-seed<seed>)");
    run_cmd->add_option("--set", run.overrides, "Config override key=value (repeatable)");
    run_cmd->add_flag("--resume", run.resume, "Continue from the latest task checkpoint in the output directory");

    std::string checkpoint;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on every task it has seen");
    eval_cmd->add_option("checkpoint", checkpoint, "Checkpoint file")->required();

    std::string store_path;
    auto* inspect_cmd = app.add_subcommand("inspect-store", "Validate a store file and report its accounting");
    inspect_cmd->add_option("store", store_path, "Store file")->required();

    std::string rec_store, rec_ckpt, rec_out;
    auto* rec_cmd = app.add_subcommand("reconstruct", "Decode every stored exemplar to an image file");
    rec_cmd->add_option("--store", rec_store, "Store file")->required();
    rec_cmd->add_option("--checkpoint", rec_ckpt, "Checkpoint whose model decodes the exemplars")->required();
    rec_cmd->add_option("-o,--out", rec_out, "Output directory")->required();

    std::string report_run, report_out;
    auto* report_cmd = app.add_subcommand("report", "Recompute metrics from a run's CSV reports");
    report_cmd->add_option("run", report_run, "Run directory or its reports directory")->required();
    report_cmd->add_option("-o,--out", report_out, "Re-emit CSVs and plot into this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }
    bmae_set_log_level(quiet ? 0 : (verbose ? 3 : 2));

    if (run_cmd->parsed())
        return cmd_run(run);
    if (eval_cmd->parsed())
        return cmd_eval(checkpoint);
    if (inspect_cmd->parsed())
        return cmd_inspect(store_path);
    if (rec_cmd->parsed())
        return cmd_reconstruct(rec_store, rec_ckpt, rec_out);
    if (report_cmd->parsed())
        return cmd_report(report_run, report_out);
    return kExitConfig;
}
