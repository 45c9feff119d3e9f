// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 The bmae Authors

#include "bmae/bmae.h"

#include <cstring>
#include <string>

#include "bmae/config.hpp"
#include "bmae/engine.hpp"
#include "bmae/exemplar_store.hpp"
#include "bmae/metrics.hpp"

struct bmae_config {
    bmae::ExperimentConfig value;
};

struct bmae_ledger {
    bmae::MetricsLedger value;
};

struct bmae_store {
    bmae::ExemplarStore value;
};

namespace {

thread_local std::string g_last_error;

bmae_status fail(bmae_status status, const std::string& message) {
    g_last_error = message;
    return status;
}

// Maps the library's exception hierarchy onto status codes.
template <typename F>
bmae_status guarded(F&& body) {
    try {
        body();
        g_last_error.clear();
        return BMAE_OK;
    } catch (const bmae::ConfigError& e) {
        return fail(BMAE_ERR_CONFIG, e.what());
    } catch (const bmae::CorruptionError& e) {
        return fail(BMAE_ERR_CORRUPT, std::string(e.what()) + " (offset " + std::to_string(e.offset()) + ")");
    } catch (const bmae::IoError& e) {
        return fail(BMAE_ERR_IO, e.what());
    } catch (const bmae::NonFiniteLoss& e) {
        return fail(BMAE_ERR_NON_FINITE, e.what());
    } catch (const bmae::InvalidArgument& e) {
        return fail(BMAE_ERR_INVALID_ARGUMENT, e.what());
    } catch (const std::filesystem::filesystem_error& e) {
        return fail(BMAE_ERR_IO, e.what());
    } catch (const std::exception& e) {
        return fail(BMAE_ERR_RUNTIME, e.what());
    } catch (...) {
        return fail(BMAE_ERR_RUNTIME, "unknown error");
    }
}

bool copy_out(const std::string& text, char* buf, size_t capacity, size_t* needed) {
    if (needed)
        *needed = text.size() + 1;
    if (!buf || capacity < text.size() + 1)
        return false;
    std::memcpy(buf, text.c_str(), text.size() + 1);
    return true;
}

#define BMAE_REQUIRE(cond, what)                                                                                     \
    do {                                                                                                             \
        if (!(cond))                                                                                                 \
            return fail(BMAE_ERR_INVALID_ARGUMENT, what);                                                            \
    } while (0)

} // namespace

extern "C" {

const char* bmae_version(void) { return "0.1.0"; }

const char* bmae_last_error(void) { return g_last_error.c_str(); }

void bmae_set_log_level(int level) {
    using bmae::LogLevel;
    switch (level) {
    case 0: bmae::set_log_level(LogLevel::Error); break;
    case 1: bmae::set_log_level(LogLevel::Warn); break;
    case 2: bmae::set_log_level(LogLevel::Info); break;
    default: bmae::set_log_level(level < 0 ? LogLevel::Silent : LogLevel::Debug); break;
    }
}

bmae_status bmae_config_new(bmae_config** out) {
    BMAE_REQUIRE(out, "out is NULL");
    return guarded([&] { *out = new bmae_config{}; });
}

bmae_status bmae_config_load(const char* path, bmae_config** out) {
    BMAE_REQUIRE(path && out, "path or out is NULL");
    return guarded([&] { *out = new bmae_config{bmae::load_config(path)}; });
}

bmae_status bmae_config_set(bmae_config* config, const char* key, const char* value) {
    BMAE_REQUIRE(config && key && value, "config, key or value is NULL");
    return guarded([&] { bmae::set_config_value(config->value, key, value); });
}

bmae_status bmae_config_get(const bmae_config* config, const char* key, char* buf, size_t capacity,
                            size_t* needed) {
    BMAE_REQUIRE(config && key, "config or key is NULL");
    bool fits = false;
    const bmae_status s = guarded([&] { fits = copy_out(bmae::get_config_value(config->value, key), buf, capacity, needed); });
    if (s == BMAE_OK && !fits && buf)
        return fail(BMAE_ERR_INVALID_ARGUMENT, "buffer too small");
    return s;
}

bmae_status bmae_config_validate(const bmae_config* config) {
    BMAE_REQUIRE(config, "config is NULL");
    return guarded([&] { config->value.validate(); });
}

bmae_status bmae_config_save(const bmae_config* config, const char* path) {
    BMAE_REQUIRE(config && path, "config or path is NULL");
    return guarded([&] {
        std::FILE* f = std::fopen(path, "wb");
        if (!f)
            throw bmae::IoError(std::string("cannot write ") + path);
        const std::string text = bmae::to_text(config->value);
        const bool ok = std::fwrite(text.data(), 1, text.size(), f) == text.size();
        std::fclose(f);
        if (!ok)
            throw bmae::IoError(std::string("short write to ") + path);
    });
}

void bmae_config_free(bmae_config* config) { delete config; }

bmae_status bmae_run(const bmae_config* config, const char* out_dir, int resume, bmae_ledger** ledger) {
    BMAE_REQUIRE(config && out_dir, "config or out_dir is NULL");
    return guarded([&] {
        auto result = bmae::run_experiment(config->value, out_dir, resume != 0);
        if (ledger)
            *ledger = new bmae_ledger{std::move(result)};
    });
}

bmae_status bmae_ledger_load(const char* reports_dir, bmae_ledger** out) {
    BMAE_REQUIRE(reports_dir && out, "reports_dir or out is NULL");
    return guarded([&] { *out = new bmae_ledger{bmae::load_reports(reports_dir)}; });
}

bmae_status bmae_ledger_phases(const bmae_ledger* ledger, int* phases) {
    BMAE_REQUIRE(ledger && phases, "ledger or phases is NULL");
    *phases = ledger->value.phases();
    return BMAE_OK;
}

bmae_status bmae_ledger_accuracy(const bmae_ledger* ledger, int after_task, int task, double* out) {
    BMAE_REQUIRE(ledger && out, "ledger or out is NULL");
    BMAE_REQUIRE(after_task >= 0 && after_task < ledger->value.phases() && task >= 0 && task <= after_task,
                 "accuracy index outside the lower triangle");
    *out = ledger->value.acc[after_task][task];
    return BMAE_OK;
}

bmae_status bmae_ledger_summary(const bmae_ledger* ledger, double* avg, double* last, double* forgetting) {
    BMAE_REQUIRE(ledger, "ledger is NULL");
    return guarded([&] {
        if (avg)
            *avg = bmae::avg_accuracy(ledger->value);
        if (last)
            *last = bmae::last_accuracy(ledger->value);
        if (forgetting)
            *forgetting = bmae::forgetting(ledger->value);
    });
}

bmae_status bmae_ledger_replay_mse(const bmae_ledger* ledger, int after_task, double* out) {
    BMAE_REQUIRE(ledger && out, "ledger or out is NULL");
    BMAE_REQUIRE(after_task >= 0 && static_cast<size_t>(after_task) < ledger->value.replay_mse.size(),
                 "no replay error recorded for that task");
    *out = ledger->value.replay_mse[after_task];
    return BMAE_OK;
}

bmae_status bmae_ledger_feature_density(const bmae_ledger* ledger, double* out) {
    BMAE_REQUIRE(ledger && out, "ledger or out is NULL");
    BMAE_REQUIRE(ledger->value.feature_density.has_value(), "run recorded no feature density");
    *out = *ledger->value.feature_density;
    return BMAE_OK;
}

bmae_status bmae_ledger_write_reports(const bmae_ledger* ledger, const char* out_dir) {
    BMAE_REQUIRE(ledger && out_dir, "ledger or out_dir is NULL");
    return guarded([&] { bmae::emit_reports(ledger->value, out_dir); });
}

void bmae_ledger_free(bmae_ledger* ledger) { delete ledger; }

bmae_status bmae_eval(const char* checkpoint, double* out, size_t capacity, size_t* count) {
    BMAE_REQUIRE(checkpoint, "checkpoint is NULL");
    return guarded([&] {
        const auto row = bmae::evaluate_checkpoint(checkpoint);
        if (count)
            *count = row.size();
        for (size_t i = 0; out && i < row.size() && i < capacity; ++i)
            out[i] = row[i];
    });
}

bmae_status bmae_store_open(const char* path, bmae_store** out) {
    BMAE_REQUIRE(path && out, "path or out is NULL");
    return guarded([&] { *out = new bmae_store{bmae::ExemplarStore::load(path)}; });
}

bmae_status bmae_store_get_info(const bmae_store* store, bmae_store_info* info) {
    BMAE_REQUIRE(store && info, "store or info is NULL");
    const auto& s = store->value;
    info->budget_bytes = s.budget_bytes();
    info->used_bytes = s.used_bytes();
    info->overhead_bytes = s.overhead_bytes();
    info->entries = s.entry_count();
    info->classes = s.class_count();
    return BMAE_OK;
}

bmae_status bmae_store_class_entries(const bmae_store* store, int class_id, uint64_t* count) {
    BMAE_REQUIRE(store && count, "store or count is NULL");
    *count = store->value.contains(class_id) ? store->value.entries(class_id).size() : 0;
    return BMAE_OK;
}

void bmae_store_free(bmae_store* store) { delete store; }

bmae_status bmae_store_inspect(const char* path, char* buf, size_t capacity, size_t* needed) {
    BMAE_REQUIRE(path, "path is NULL");
    std::string report;
    bmae_status s = guarded([&] { report = bmae::inspect_store(path); });
    if (s != BMAE_OK)
        return s;
    const bool fits = copy_out(report, buf, capacity, needed);
    if (report.find("format: INVALID") != std::string::npos)
        return fail(BMAE_ERR_CORRUPT, "store format validation failed");
    if (!fits && buf)
        return fail(BMAE_ERR_INVALID_ARGUMENT, "buffer too small");
    return BMAE_OK;
}

bmae_status bmae_reconstruct(const char* store_path, const char* checkpoint, const char* out_dir,
                             size_t* written) {
    BMAE_REQUIRE(store_path && checkpoint && out_dir, "store_path, checkpoint or out_dir is NULL");
    return guarded([&] {
        const size_t n = bmae::reconstruct_store_images(store_path, checkpoint, out_dir);
        if (written)
            *written = n;
    });
}

} // extern "C"
