#include "drift.h"

#include <string>

#include "drift/dataset.hpp"
#include "drift/engine.hpp"
#include "json.hpp"

using drift::data::Dataset;
using drift::engine::RunConfig;
using drift::engine::RunMetrics;

struct drift_dataset {
    Dataset ds;
};

struct drift_run {
    RunMetrics metrics;
    std::string resolved_config;
    // Cached accessor payloads, built lazily.
    std::string jsonl;
    std::string summary;
    std::string checkpoint;
};

namespace {

thread_local std::string g_last_error;
thread_local std::string g_resolved_buffer;

void set_error(const std::exception& e) { g_last_error = e.what(); }

template <typename Fn>
auto guard_ptr(Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const std::exception& e) {
        set_error(e);
        return nullptr;
    }
}

template <typename Fn>
int guard_int(Fn&& fn) {
    try {
        fn();
        return DRIFT_OK;
    } catch (const std::exception& e) {
        set_error(e);
        return DRIFT_ERR;
    }
}

void require(const void* p, const char* what) {
    if (!p) throw drift::Error(std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* drift_last_error(void) { return g_last_error.c_str(); }

drift_dataset* drift_two_moons(int n_labeled_per_class, int n_unlabeled_per_class,
                               double noise_std, uint64_t seed) {
    return guard_ptr([&]() -> drift_dataset* {
        if (n_labeled_per_class < 1 || n_unlabeled_per_class < 0) {
            throw drift::Error("two_moons: counts must be positive");
        }
        return new drift_dataset{drift::data::make_two_moons(
            static_cast<std::size_t>(n_labeled_per_class),
            static_cast<std::size_t>(n_unlabeled_per_class), noise_std, seed)};
    });
}

drift_dataset* drift_gaussian_blobs(int n_labeled_per_class, int n_unlabeled_per_class,
                                    double separation, double noise_std, uint64_t seed) {
    return guard_ptr([&]() -> drift_dataset* {
        if (n_labeled_per_class < 1 || n_unlabeled_per_class < 0) {
            throw drift::Error("gaussian_blobs: counts must be positive");
        }
        return new drift_dataset{drift::data::make_gaussian_blobs(
            static_cast<std::size_t>(n_labeled_per_class),
            static_cast<std::size_t>(n_unlabeled_per_class), separation, noise_std, seed)};
    });
}

drift_dataset* drift_dataset_load_csv(const char* path, const char* label_column,
                                      const char* unlabeled_sentinel) {
    return guard_ptr([&]() -> drift_dataset* {
        require(path, "path");
        require(label_column, "label_column");
        return new drift_dataset{drift::data::load_csv(
            path, label_column, unlabeled_sentinel ? unlabeled_sentinel : "")};
    });
}

drift_dataset* drift_dataset_with_label_noise(const drift_dataset* ds, double flip_rate,
                                              uint64_t seed) {
    return guard_ptr([&]() -> drift_dataset* {
        require(ds, "ds");
        return new drift_dataset{drift::data::inject_label_noise(ds->ds, flip_rate, seed)};
    });
}

int drift_dataset_write_csv(const drift_dataset* ds, const char* path,
                            const char* generator_info_json) {
    return guard_int([&] {
        require(ds, "ds");
        require(path, "path");
        drift::data::write_csv(ds->ds, path,
                               generator_info_json ? generator_info_json : "{}");
    });
}

int drift_dataset_counts(const drift_dataset* ds, int* n_total, int* n_labeled,
                         int* n_unlabeled, int* num_classes) {
    return guard_int([&] {
        require(ds, "ds");
        if (n_total) *n_total = static_cast<int>(ds->ds.size());
        if (n_labeled) *n_labeled = static_cast<int>(ds->ds.labeled_indices.size());
        if (n_unlabeled) *n_unlabeled = static_cast<int>(ds->ds.unlabeled_indices.size());
        if (num_classes) *num_classes = static_cast<int>(ds->ds.num_classes);
    });
}

void drift_dataset_free(drift_dataset* ds) { delete ds; }

const char* drift_resolve_config(const char* run_config_json) {
    try {
        require(run_config_json, "run_config_json");
        g_resolved_buffer = RunConfig::from_json(run_config_json).to_json();
        return g_resolved_buffer.c_str();
    } catch (const std::exception& e) {
        set_error(e);
        return nullptr;
    }
}

drift_run* drift_train(const drift_dataset* ds, const char* run_config_json) {
    return guard_ptr([&]() -> drift_run* {
        require(ds, "ds");
        require(run_config_json, "run_config_json");
        RunConfig cfg = RunConfig::from_json(run_config_json);
        auto* run = new drift_run;
        try {
            run->metrics = drift::engine::train(cfg, ds->ds);
            run->resolved_config = cfg.to_json();
        } catch (...) {
            delete run;
            throw;
        }
        return run;
    });
}

int drift_run_final_accuracy(const drift_run* run, double* out) {
    return guard_int([&] {
        require(run, "run");
        require(out, "out");
        *out = run->metrics.final_accuracy;
    });
}

const char* drift_run_metrics_jsonl(const drift_run* run) {
    return guard_ptr([&]() -> const char* {
        require(run, "run");
        auto* r = const_cast<drift_run*>(run);
        if (r->jsonl.empty()) r->jsonl = r->metrics.metrics_jsonl();
        return r->jsonl.c_str();
    });
}

const char* drift_run_summary_json(const drift_run* run) {
    return guard_ptr([&]() -> const char* {
        require(run, "run");
        auto* r = const_cast<drift_run*>(run);
        if (r->summary.empty()) {
            nlohmann::ordered_json j;
            j["config"] = nlohmann::ordered_json::parse(r->resolved_config);
            j["final_accuracy"] = r->metrics.final_accuracy;
            nlohmann::ordered_json records = nlohmann::ordered_json::array();
            for (const auto& rec : r->metrics.records) {
                records.push_back({{"step", rec.step},
                                   {"train_loss", rec.train_loss},
                                   {"accuracy", rec.accuracy},
                                   {"mean_weight", rec.mean_weight},
                                   {"mean_label_entropy", rec.mean_label_entropy}});
            }
            j["records"] = std::move(records);
            r->summary = j.dump(2);
        }
        return r->summary.c_str();
    });
}

const char* drift_run_checkpoint_json(const drift_run* run) {
    return guard_ptr([&]() -> const char* {
        require(run, "run");
        auto* r = const_cast<drift_run*>(run);
        if (r->checkpoint.empty()) r->checkpoint = r->metrics.final_params.to_json();
        return r->checkpoint.c_str();
    });
}

void drift_run_free(drift_run* run) { delete run; }

int drift_gradcheck(uint64_t seed, int batch_size, double alpha, double* max_rel_vs_fd,
                    double* max_err_decomposition, double* interaction_norm) {
    return guard_int([&] {
        if (batch_size < 1) throw drift::Error("gradcheck: batch_size must be >= 1");
        auto rep = drift::engine::gradcheck(seed, static_cast<std::size_t>(batch_size), alpha);
        if (max_rel_vs_fd) *max_rel_vs_fd = rep.max_rel_vs_fd;
        if (max_err_decomposition) *max_err_decomposition = rep.max_err_decomposition;
        if (interaction_norm) *interaction_norm = rep.interaction_norm;
    });
}

int drift_paired_ttest(const double* a, const double* b, int n, double* t_statistic,
                       double* p_value, int* degenerate) {
    return guard_int([&] {
        require(a, "a");
        require(b, "b");
        if (n < 2) throw drift::Error("paired_ttest: need n >= 2");
        std::vector<double> va(a, a + n), vb(b, b + n);
        auto rep = drift::engine::compare_runs(va, vb);
        if (t_statistic) *t_statistic = rep.t_statistic;
        if (p_value) *p_value = rep.p_value;
        if (degenerate) *degenerate = rep.degenerate ? 1 : 0;
    });
}

}  // extern "C"
