#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include "drift.h"
#include "json.hpp"

TEST_CASE("dataset creation and counts") {
    drift_dataset* ds = drift_two_moons(12, 500, 0.1, 0);
    REQUIRE(ds != nullptr);
    int total = 0, labeled = 0, unlabeled = 0, classes = 0;
    CHECK(drift_dataset_counts(ds, &total, &labeled, &unlabeled, &classes) == DRIFT_OK);
    CHECK(total == 1024);
    CHECK(labeled == 24);
    CHECK(unlabeled == 1000);
    CHECK(classes == 2);
    drift_dataset_free(ds);
}

TEST_CASE("invalid dataset arguments set the error string") {
    drift_dataset* ds = drift_two_moons(0, 0, 0.1, 0);
    CHECK(ds == nullptr);
    CHECK(std::strlen(drift_last_error()) > 0);

    ds = drift_two_moons(5, 5, -1.0, 0);
    CHECK(ds == nullptr);
    CHECK(std::string(drift_last_error()).find("noise_std") != std::string::npos);
}

TEST_CASE("label noise and CSV round trip through the C API") {
    drift_dataset* ds = drift_gaussian_blobs(20, 30, 4.0, 0.5, 3);
    REQUIRE(ds != nullptr);
    drift_dataset* noisy = drift_dataset_with_label_noise(ds, 0.5, 7);
    REQUIRE(noisy != nullptr);

    const char* path = "capi_roundtrip.csv";
    CHECK(drift_dataset_write_csv(noisy, path, nullptr) == DRIFT_OK);
    drift_dataset* back = drift_dataset_load_csv(path, "label", "");
    REQUIRE(back != nullptr);
    int t1, l1, u1, c1, t2, l2, u2, c2;
    drift_dataset_counts(noisy, &t1, &l1, &u1, &c1);
    drift_dataset_counts(back, &t2, &l2, &u2, &c2);
    CHECK(t1 == t2);
    CHECK(l1 == l2);
    CHECK(u1 == u2);
    CHECK(c1 == c2);

    CHECK(drift_dataset_load_csv("missing.csv", "label", "") == nullptr);
    CHECK(drift_dataset_with_label_noise(ds, 2.0, 0) == nullptr);

    drift_dataset_free(back);
    drift_dataset_free(noisy);
    drift_dataset_free(ds);
    std::remove(path);
    std::remove((std::string(path) + ".meta.json").c_str());
}

TEST_CASE("resolve_config materializes defaults and rejects unknown keys") {
    const char* resolved = drift_resolve_config("{}");
    REQUIRE(resolved != nullptr);
    auto j = nlohmann::json::parse(resolved);
    CHECK(j["alpha"] == 0.5);
    CHECK(j["tau"] == 0.5);
    CHECK(j["hidden_dim"] == 50);
    CHECK(j["optimizer"]["learning_rate"] == 0.01);

    CHECK(drift_resolve_config("{\"nope\": 1}") == nullptr);
    CHECK(std::string(drift_last_error()).find("nope") != std::string::npos);
    CHECK(drift_resolve_config("{\"alpha\": 2.0}") == nullptr);
    CHECK(drift_resolve_config(nullptr) == nullptr);
}

TEST_CASE("training run produces accuracy, metrics, summary and checkpoint") {
    drift_dataset* ds = drift_gaussian_blobs(10, 40, 8.0, 0.5, 5);
    REQUIRE(ds != nullptr);
    const char* cfg =
        "{\"hidden_dim\": 8, \"warmup_steps\": 100, \"total_steps\": 21,"
        " \"eval_every\": 5, \"seed\": 1}";
    drift_run* run = drift_train(ds, cfg);
    REQUIRE(run != nullptr);

    double acc = 0.0;
    CHECK(drift_run_final_accuracy(run, &acc) == DRIFT_OK);
    CHECK(acc == doctest::Approx(1.0));

    const char* jsonl = drift_run_metrics_jsonl(run);
    REQUIRE(jsonl != nullptr);
    CHECK(std::string(jsonl).find("\"step\":0") != std::string::npos);

    const char* summary = drift_run_summary_json(run);
    REQUIRE(summary != nullptr);
    auto s = nlohmann::json::parse(summary);
    CHECK(s["final_accuracy"] == acc);
    CHECK(s["config"]["hidden_dim"] == 8);
    CHECK(s["records"].is_array());

    const char* ckpt = drift_run_checkpoint_json(run);
    REQUIRE(ckpt != nullptr);
    auto c = nlohmann::json::parse(ckpt);
    CHECK(c.contains("W1"));
    CHECK(c["W1"]["shape"] == nlohmann::json({8, 2}));

    drift_run_free(run);
    drift_dataset_free(ds);
}

TEST_CASE("train rejects bad configs and null handles") {
    drift_dataset* ds = drift_two_moons(4, 10, 0.1, 0);
    REQUIRE(ds != nullptr);
    CHECK(drift_train(ds, "{\"total_steps\": 0}") == nullptr);
    CHECK(drift_train(nullptr, "{}") == nullptr);
    CHECK(drift_train(ds, nullptr) == nullptr);

    double out = 0.0;
    CHECK(drift_run_final_accuracy(nullptr, &out) == DRIFT_ERR);
    CHECK(drift_run_metrics_jsonl(nullptr) == nullptr);
    drift_dataset_free(ds);
    drift_dataset_free(nullptr);  // free on NULL is a no-op
    drift_run_free(nullptr);
}

TEST_CASE("gradcheck reports small errors") {
    double fd = 1.0, dec = 1.0, inter = 0.0;
    CHECK(drift_gradcheck(3, 8, 0.5, &fd, &dec, &inter) == DRIFT_OK);
    CHECK(fd < 1e-4);
    CHECK(dec < 1e-8);
    CHECK(inter > 0.0);
    CHECK(drift_gradcheck(3, 0, 0.5, &fd, &dec, &inter) == DRIFT_ERR);
}

TEST_CASE("paired t-test through the C API") {
    double a[] = {0.92, 0.93, 0.91, 0.94, 0.95};
    double b[] = {0.90, 0.90, 0.90, 0.90, 0.90};
    double t = 0.0, p = 1.0;
    int degenerate = 1;
    CHECK(drift_paired_ttest(a, b, 5, &t, &p, &degenerate) == DRIFT_OK);
    CHECK(t == doctest::Approx(4.24264).epsilon(1e-4));
    CHECK(p < 0.05);
    CHECK(degenerate == 0);

    double c[] = {1.0, 2.0, 3.0};
    double d[] = {0.5, 1.5, 2.5};
    CHECK(drift_paired_ttest(c, d, 3, &t, &p, &degenerate) == DRIFT_OK);
    CHECK(degenerate == 1);
    CHECK(std::isnan(p));

    CHECK(drift_paired_ttest(a, b, 1, &t, &p, &degenerate) == DRIFT_ERR);
    CHECK(drift_paired_ttest(nullptr, b, 5, &t, &p, &degenerate) == DRIFT_ERR);
}
