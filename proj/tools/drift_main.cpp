// drift: data generation, training runs, paired comparisons, sweeps and
// gradient checking on top of the libdrift C API.
//
// Exit codes: 0 success, 1 gradcheck/acceptance failure, 2 usage or
// validation error.

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "drift.h"

namespace fs = std::filesystem;
using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

struct CliError {
    int code;
    std::string message;
};

[[noreturn]] void fail(int code, const std::string& msg) { throw CliError{code, msg}; }

std::string last_error() { return drift_last_error(); }

std::string out_root() {
    const char* env = std::getenv("DRIFT_OUT_ROOT");
    return env && *env ? env : ".";
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream f(path, std::ios::trunc);
    if (!f) fail(2, "cannot open " + path.string() + " for writing");
    f << content;
    if (!f) fail(2, "write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
    std::ifstream f(path);
    if (!f) fail(2, "cannot read " + path.string());
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

json parse_json_file(const fs::path& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::exception& e) {
        fail(2, "invalid JSON in " + path.string() + ": " + e.what());
    }
}

struct DatasetHandle {
    drift_dataset* ptr = nullptr;
    ~DatasetHandle() { drift_dataset_free(ptr); }
};

struct RunHandle {
    drift_run* ptr = nullptr;
    ~RunHandle() { drift_run_free(ptr); }
};

void check_keys(const json& j, const std::set<std::string>& known, const std::string& where) {
    std::string bad;
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key())) bad += " '" + it.key() + "'";
    }
    if (!bad.empty()) fail(2, "unknown key(s) in " + where + ":" + bad);
}

// ---- dataset block ----

drift_dataset* build_dataset(const json& block) {
    if (!block.is_object()) fail(2, "spec 'dataset' must be an object");
    check_keys(block,
               {"generator", "n_labeled_per_class", "n_unlabeled_per_class", "noise_std",
                "separation", "seed", "flip_rate", "noise_seed", "path", "label_column",
                "unlabeled_sentinel"},
               "dataset block");
    std::string gen = block.value("generator", "two_moons");
    drift_dataset* ds = nullptr;
    if (gen == "two_moons") {
        ds = drift_two_moons(block.value("n_labeled_per_class", 12),
                             block.value("n_unlabeled_per_class", 500),
                             block.value("noise_std", 0.1), block.value("seed", 0ULL));
    } else if (gen == "blobs") {
        ds = drift_gaussian_blobs(block.value("n_labeled_per_class", 12),
                                  block.value("n_unlabeled_per_class", 500),
                                  block.value("separation", 4.0),
                                  block.value("noise_std", 1.0), block.value("seed", 0ULL));
    } else if (gen == "csv") {
        if (!block.contains("path")) fail(2, "dataset generator 'csv' needs 'path'");
        ds = drift_dataset_load_csv(block["path"].get<std::string>().c_str(),
                                    block.value("label_column", "label").c_str(),
                                    block.value("unlabeled_sentinel", "").c_str());
    } else {
        fail(2, "unknown dataset generator '" + gen + "'");
    }
    if (!ds) fail(2, "dataset construction failed: " + last_error());
    double flip = block.value("flip_rate", 0.0);
    if (flip > 0.0) {
        uint64_t noise_seed = block.value("noise_seed", block.value("seed", 0ULL) + 1);
        drift_dataset* noisy = drift_dataset_with_label_noise(ds, flip, noise_seed);
        drift_dataset_free(ds);
        if (!noisy) fail(2, "label noise injection failed: " + last_error());
        ds = noisy;
    }
    return ds;
}

// ---- train bundle ----

struct TrainBundle {
    ordered_json resolved_spec;
    std::vector<uint64_t> seeds;
    std::vector<double> finals;
    std::vector<json> summaries;  // per seed
};

json run_config_for_seed(const json& spec, uint64_t seed) {
    json cfg = spec;
    cfg.erase("dataset");
    cfg.erase("seeds");
    cfg["seed"] = seed;
    return cfg;
}

TrainBundle run_training(const json& spec, const fs::path& out_dir, unsigned jobs) {
    if (!spec.contains("seeds") || !spec["seeds"].is_array() || spec["seeds"].empty()) {
        fail(2, "spec needs a non-empty 'seeds' array");
    }
    if (!spec.contains("dataset")) fail(2, "spec needs a 'dataset' block");
    std::vector<uint64_t> seeds = spec["seeds"].get<std::vector<uint64_t>>();

    // Validate the per-seed config once up front; the library reports every
    // offending key at once.
    const char* resolved0 =
        drift_resolve_config(run_config_for_seed(spec, seeds[0]).dump().c_str());
    if (!resolved0) fail(2, "invalid run config: " + last_error());

    DatasetHandle ds;
    ds.ptr = build_dataset(spec["dataset"]);

    std::vector<std::string> summaries(seeds.size());
    std::vector<std::string> jsonls(seeds.size());
    std::vector<std::string> checkpoints(seeds.size());
    std::vector<double> finals(seeds.size(), 0.0);
    std::vector<std::string> errors(seeds.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= seeds.size()) return;
            std::string cfg = run_config_for_seed(spec, seeds[i]).dump();
            RunHandle run;
            run.ptr = drift_train(ds.ptr, cfg.c_str());
            if (!run.ptr) {
                errors[i] = last_error();
                continue;
            }
            drift_run_final_accuracy(run.ptr, &finals[i]);
            summaries[i] = drift_run_summary_json(run.ptr);
            jsonls[i] = drift_run_metrics_jsonl(run.ptr);
            checkpoints[i] = drift_run_checkpoint_json(run.ptr);
        }
    };
    jobs = std::max(1u, std::min<unsigned>(jobs, seeds.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        if (!errors[i].empty()) {
            fail(2, "run for seed " + std::to_string(seeds[i]) + " failed: " + errors[i]);
        }
    }

    TrainBundle bundle;
    bundle.seeds = seeds;
    bundle.finals = finals;
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        fs::path seed_dir = out_dir / ("seed_" + std::to_string(seeds[i]));
        write_file(seed_dir / "metrics.jsonl", jsonls[i]);
        write_file(seed_dir / "summary.json", summaries[i]);
        write_file(seed_dir / "checkpoint.json", checkpoints[i]);
        bundle.summaries.push_back(json::parse(summaries[i]));
    }

    double mean = 0.0;
    for (double a : finals) mean += a;
    mean /= static_cast<double>(finals.size());
    double var = 0.0;
    for (double a : finals) var += (a - mean) * (a - mean);
    double sd = finals.size() > 1 ? std::sqrt(var / static_cast<double>(finals.size() - 1)) : 0.0;

    ordered_json top;
    top["spec"] = spec;
    top["resolved_run_config"] = json::parse(resolved0);
    top["seeds"] = seeds;
    top["final_accuracies"] = finals;
    top["mean_final_accuracy"] = mean;
    top["std_final_accuracy"] = sd;
    bundle.resolved_spec = top;
    write_file(out_dir / "summary.json", top.dump(2) + "\n");
    return bundle;
}

json apply_overrides(json spec, const std::vector<std::string>& overrides) {
    for (const auto& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos) fail(2, "override '" + ov + "' is not key=value");
        std::string key = ov.substr(0, eq);
        std::string value = ov.substr(eq + 1);
        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::exception&) {
            parsed = value;  // bare strings like method=conventional
        }
        json* slot = &spec;
        std::size_t pos = 0;
        for (;;) {
            auto dot = key.find('.', pos);
            if (dot == std::string::npos) {
                (*slot)[key.substr(pos)] = parsed;
                break;
            }
            slot = &(*slot)[key.substr(pos, dot - pos)];
            pos = dot + 1;
        }
    }
    return spec;
}

// ---- subcommand bodies ----

int cmd_generate(const std::string& generator, int labeled, int unlabeled, double noise,
                 double separation, uint64_t seed, double flip_rate,
                 const std::string& out) {
    json block = {{"generator", generator == "two-moons" ? "two_moons" : "blobs"},
                  {"n_labeled_per_class", labeled},
                  {"n_unlabeled_per_class", unlabeled},
                  {"noise_std", noise},
                  {"seed", seed}};
    if (generator == "blobs") block["separation"] = separation;
    if (flip_rate > 0.0) block["flip_rate"] = flip_rate;
    DatasetHandle ds;
    ds.ptr = build_dataset(block);
    fs::path path = out;
    if (!path.parent_path().empty()) fs::create_directories(path.parent_path());
    if (drift_dataset_write_csv(ds.ptr, path.string().c_str(), block.dump().c_str()) != DRIFT_OK) {
        fail(2, "write failed: " + last_error());
    }
    int n = 0, nl = 0, nu = 0, c = 0;
    drift_dataset_counts(ds.ptr, &n, &nl, &nu, &c);
    std::cout << "wrote " << path.string() << " (" << n << " rows, " << nl << " labeled, "
              << nu << " unlabeled, " << c << " classes)\n";
    return 0;
}

int cmd_train(const std::string& spec_path, const std::vector<std::string>& overrides,
              const std::string& out, unsigned jobs) {
    json spec = apply_overrides(parse_json_file(spec_path), overrides);
    fs::path out_dir = out.empty() ? fs::path(out_root()) / "train" : fs::path(out);
    TrainBundle b = run_training(spec, out_dir, jobs);
    std::cout << "runs: " << b.seeds.size()
              << "  mean final accuracy: " << b.resolved_spec["mean_final_accuracy"]
              << "  std: " << b.resolved_spec["std_final_accuracy"] << "\n"
              << "bundle: " << out_dir.string() << "\n";
    return 0;
}

json load_bundle_summary(const fs::path& dir) {
    fs::path p = dir / "summary.json";
    if (!fs::exists(p)) fail(2, "malformed run directory " + dir.string() + ": missing summary.json");
    return parse_json_file(p);
}

int cmd_compare(const std::string& dir_a, const std::string& dir_b, const std::string& out) {
    json sa = load_bundle_summary(dir_a);
    json sb = load_bundle_summary(dir_b);
    std::vector<uint64_t> seeds_a = sa.at("seeds").get<std::vector<uint64_t>>();
    std::vector<uint64_t> seeds_b = sb.at("seeds").get<std::vector<uint64_t>>();
    if (seeds_a != seeds_b) {
        std::string missing;
        for (uint64_t s : seeds_a) {
            if (std::find(seeds_b.begin(), seeds_b.end(), s) == seeds_b.end()) {
                missing += " " + std::to_string(s);
            }
        }
        fail(2, "seed mismatch between bundles; seeds missing from B:" +
                    (missing.empty() ? " (extra seeds in B)" : missing));
    }
    std::vector<double> fa = sa.at("final_accuracies").get<std::vector<double>>();
    std::vector<double> fb = sb.at("final_accuracies").get<std::vector<double>>();

    double t = 0.0, p = 0.0;
    int degenerate = 0;
    if (drift_paired_ttest(fa.data(), fb.data(), static_cast<int>(fa.size()), &t, &p,
                           &degenerate) != DRIFT_OK) {
        fail(2, "t-test failed: " + last_error());
    }

    // Learning-curve table from the per-seed summaries.
    ordered_json curve = ordered_json::array();
    auto curve_stats = [&](const fs::path& dir, const std::vector<uint64_t>& seeds,
                           std::size_t k, long& step, double& mean, double& sd) {
        std::vector<double> accs;
        for (uint64_t s : seeds) {
            json seed_summary =
                parse_json_file(dir / ("seed_" + std::to_string(s)) / "summary.json");
            const auto& recs = seed_summary.at("records");
            if (k >= recs.size()) fail(2, "eval schedules differ across seeds in " + dir.string());
            step = recs[k].at("step").get<long>();
            accs.push_back(recs[k].at("accuracy").get<double>());
        }
        mean = 0.0;
        for (double a : accs) mean += a;
        mean /= static_cast<double>(accs.size());
        double var = 0.0;
        for (double a : accs) var += (a - mean) * (a - mean);
        sd = accs.size() > 1 ? std::sqrt(var / static_cast<double>(accs.size() - 1)) : 0.0;
    };
    json first = parse_json_file(fs::path(dir_a) / ("seed_" + std::to_string(seeds_a[0])) /
                                 "summary.json");
    std::size_t n_records = first.at("records").size();
    for (std::size_t k = 0; k < n_records; ++k) {
        long step_a = 0, step_b = 0;
        double ma = 0, da = 0, mb = 0, db = 0;
        curve_stats(dir_a, seeds_a, k, step_a, ma, da);
        curve_stats(dir_b, seeds_b, k, step_b, mb, db);
        curve.push_back({{"step", step_a},
                         {"mean_a", ma},
                         {"std_a", da},
                         {"mean_b", mb},
                         {"std_b", db}});
    }

    ordered_json report;
    report["bundle_a"] = dir_a;
    report["bundle_b"] = dir_b;
    report["seeds"] = seeds_a;
    report["finals_a"] = fa;
    report["finals_b"] = fb;
    report["mean_a"] = sa.at("mean_final_accuracy");
    report["std_a"] = sa.at("std_final_accuracy");
    report["mean_b"] = sb.at("mean_final_accuracy");
    report["std_b"] = sb.at("std_final_accuracy");
    report["t_statistic"] = t;
    report["p_value_one_sided"] = degenerate ? json() : json(p);
    report["degenerate_no_variance"] = degenerate != 0;
    report["learning_curve"] = curve;

    fs::path out_path = out.empty() ? fs::path(out_root()) / "compare_report.json" : fs::path(out);
    write_file(out_path, report.dump(2) + "\n");
    std::cout << "A mean=" << report["mean_a"] << " std=" << report["std_a"]
              << "  B mean=" << report["mean_b"] << " std=" << report["std_b"] << "\n";
    if (degenerate) {
        std::cout << "paired t-test: no variance in the differences (degenerate)\n";
    } else {
        std::cout << "paired t=" << t << "  one-sided p=" << p << "\n";
    }
    std::cout << "report: " << out_path.string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& param, std::vector<double> values,
              const std::string& spec_path, const std::vector<std::string>& overrides,
              const std::string& out, unsigned jobs) {
    if (param != "alpha" && param != "tau") fail(2, "sweep parameter must be 'alpha' or 'tau'");
    if (values.empty()) fail(2, "sweep needs a non-empty value list");
    std::vector<double> unique;
    for (double v : values) {
        if (std::find(unique.begin(), unique.end(), v) != unique.end()) {
            std::cerr << "warning: duplicate sweep value " << v << " ignored\n";
            continue;
        }
        unique.push_back(v);
    }
    for (double v : unique) {
        if (param == "tau" && v <= 0.0) fail(2, "invalid tau value: must be > 0");
        if (param == "alpha" && (v < 0.0 || v > 1.0)) fail(2, "invalid alpha value: must be in [0,1]");
    }

    json spec = apply_overrides(parse_json_file(spec_path), overrides);
    fs::path out_dir = out.empty() ? fs::path(out_root()) / ("sweep_" + param) : fs::path(out);

    ordered_json table = ordered_json::array();
    for (double v : unique) {
        json run_spec = spec;
        run_spec[param] = v;
        std::ostringstream tag;
        tag << param << "_" << v;
        TrainBundle b = run_training(run_spec, out_dir / tag.str(), jobs);
        table.push_back({{param, v},
                         {"mean_final_accuracy", b.resolved_spec["mean_final_accuracy"]},
                         {"std_final_accuracy", b.resolved_spec["std_final_accuracy"]},
                         {"final_accuracies", b.resolved_spec["final_accuracies"]}});
        std::cout << param << "=" << v
                  << "  mean=" << b.resolved_spec["mean_final_accuracy"]
                  << "  std=" << b.resolved_spec["std_final_accuracy"] << "\n";
    }
    ordered_json consolidated;
    consolidated["parameter"] = param;
    consolidated["table"] = table;
    write_file(out_dir / "sweep.json", consolidated.dump(2) + "\n");
    std::cout << "sweep table: " << (out_dir / "sweep.json").string() << "\n";
    return 0;
}

int cmd_gradcheck(uint64_t seed, int batch, double tolerance, double alpha) {
    if (tolerance <= 0.0) fail(2, "tolerance must be positive");
    double rel_fd = 0.0, err_dec = 0.0, inter = 0.0;
    if (drift_gradcheck(seed, batch, alpha, &rel_fd, &err_dec, &inter) != DRIFT_OK) {
        fail(2, "gradcheck failed: " + last_error());
    }
    std::cout << "max relative error vs finite differences: " << rel_fd << "\n"
              << "max error of leader + (1-alpha)*interaction recomposition: " << err_dec << "\n"
              << "max interaction-term contribution: " << inter << "\n";
    bool pass = rel_fd <= tolerance && err_dec <= tolerance;
    std::cout << (pass ? "PASS" : "FAIL") << " (tolerance " << tolerance << ")\n";
    return pass ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"differentiable self-training (teacher-student Stackelberg training)"};
    app.require_subcommand(1);

    // generate
    std::string gen_kind, gen_out = "dataset.csv";
    int gen_labeled = 12, gen_unlabeled = 500;
    double gen_noise = 0.1, gen_sep = 4.0, gen_flip = 0.0;
    uint64_t gen_seed = 0;
    auto* generate = app.add_subcommand("generate", "generate a synthetic dataset (CSV + sidecar)");
    generate->add_option("generator", gen_kind, "two-moons or blobs")
        ->required()
        ->check(CLI::IsMember({"two-moons", "blobs"}));
    generate->add_option("--labeled", gen_labeled, "labeled samples per class")
        ->check(CLI::PositiveNumber);
    generate->add_option("--unlabeled", gen_unlabeled, "unlabeled samples per class")
        ->check(CLI::NonNegativeNumber);
    generate->add_option("--noise", gen_noise, "gaussian noise std");
    generate->add_option("--separation", gen_sep, "blob center separation");
    generate->add_option("--flip-rate", gen_flip, "label flip probability");
    generate->add_option("--seed", gen_seed, "rng seed");
    generate->add_option("--out", gen_out, "output CSV path");

    // train
    std::string train_spec, train_out;
    std::vector<std::string> train_overrides;
    unsigned train_jobs = 1;
    auto* train = app.add_subcommand("train", "run training per seed from a spec file");
    train->add_option("--spec", train_spec, "experiment spec JSON")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--override", train_overrides, "key=value spec overrides");
    train->add_option("--out", train_out, "output bundle directory");
    train->add_option("--jobs", train_jobs, "seeds to run in parallel")->check(CLI::PositiveNumber);

    // compare
    std::string cmp_a, cmp_b, cmp_out;
    auto* compare = app.add_subcommand("compare", "paired comparison of two train bundles");
    compare->add_option("bundle_a", cmp_a, "first bundle directory")->required();
    compare->add_option("bundle_b", cmp_b, "second bundle directory")->required();
    compare->add_option("--out", cmp_out, "report path");

    // sweep
    std::string sweep_param, sweep_spec, sweep_out;
    std::vector<double> sweep_values;
    std::vector<std::string> sweep_overrides;
    unsigned sweep_jobs = 1;
    auto* sweep = app.add_subcommand("sweep", "train once per parameter value");
    sweep->add_option("--param", sweep_param, "alpha or tau")
        ->required()
        ->check(CLI::IsMember({"alpha", "tau"}));
    sweep->add_option("--values", sweep_values, "value list")->required()->delimiter(',');
    sweep->add_option("--spec", sweep_spec, "base spec JSON")->required()->check(CLI::ExistingFile);
    sweep->add_option("--override", sweep_overrides, "key=value spec overrides");
    sweep->add_option("--out", sweep_out, "output directory");
    sweep->add_option("--jobs", sweep_jobs, "seeds to run in parallel")->check(CLI::PositiveNumber);

    // gradcheck
    uint64_t gc_seed = 0;
    int gc_batch = 8;
    double gc_tol = 1e-4, gc_alpha = 0.5;
    auto* gradcheck = app.add_subcommand("gradcheck", "verify gradients of the full objective");
    gradcheck->add_option("--seed", gc_seed, "rng seed");
    gradcheck->add_option("--batch", gc_batch, "strategy batch size")->check(CLI::PositiveNumber);
    gradcheck->add_option("--tolerance", gc_tol, "max relative error allowed");
    gradcheck->add_option("--alpha", gc_alpha, "EMA rate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    }

    try {
        if (generate->parsed()) {
            return cmd_generate(gen_kind, gen_labeled, gen_unlabeled, gen_noise, gen_sep,
                                gen_seed, gen_flip, gen_out);
        }
        if (train->parsed()) return cmd_train(train_spec, train_overrides, train_out, train_jobs);
        if (compare->parsed()) return cmd_compare(cmp_a, cmp_b, cmp_out);
        if (sweep->parsed()) {
            return cmd_sweep(sweep_param, sweep_values, sweep_spec, sweep_overrides, sweep_out,
                             sweep_jobs);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed, gc_batch, gc_tol, gc_alpha);
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
