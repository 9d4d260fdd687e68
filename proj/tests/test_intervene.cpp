#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "cips/intervene.hpp"
#include "cips/synthcausal.hpp"

using namespace cips;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    VaeModel model;
    ImputedSet completions;

    Fixture() {
        ScmConfig scm;
        scm.n_rows = 360;
        scm.proxy_dim = 4;
        scm.seed = 3;
        auto [ds, oracle] = generate(scm);
        SplitResult sp = split(ds, 0.6, 0.2, 3);

        VaeConfig vcfg;
        vcfg.latent_dim = 2;
        vcfg.hidden_width = 8;
        vcfg.hidden_depth = 1;
        vcfg.epochs = 3;
        vcfg.batch_size = 32;
        vcfg.seed = 3;
        model = train(sp.train, sp.valid, vcfg);

        Dataset masked = simulate_missingness(sp.test, MissScenario::Moderate, 3);
        completions = multiple_impute(masked, 3, 4, 3);
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("single-row and batch predictions agree across jobs") {
    auto& f = fixture();
    DoQuery q{{1.0}};
    DoBatchResult serial = predict_do_batch(f.model, f.completions, q, 16, 5, 1);
    DoBatchResult parallel = predict_do_batch(f.model, f.completions, q, 16, 5, 4);
    CHECK(serial.mean == parallel.mean);
    CHECK(serial.stderr_ == parallel.stderr_);
    for (std::size_t r : {std::size_t{0}, std::size_t{7}, std::size_t{41}}) {
        DoPrediction p = predict_do(f.model, f.completions, r, q, 16, 5);
        CHECK(p.mean == serial.mean[r]);
        CHECK(p.stderr_ == serial.stderr_[r]);
        CHECK(p.n_imputations == 3);
        CHECK(p.latent_samples == 16);
    }
}

TEST_CASE("predictions are deterministic in the seed") {
    auto& f = fixture();
    DoQuery q{{0.0}};
    DoBatchResult a = predict_do_batch(f.model, f.completions, q, 16, 5);
    DoBatchResult b = predict_do_batch(f.model, f.completions, q, 16, 5);
    CHECK(a.mean == b.mean);
    DoBatchResult c = predict_do_batch(f.model, f.completions, q, 16, 6);
    CHECK(a.mean != c.mean);
}

TEST_CASE("the intervention changes the prediction") {
    auto& f = fixture();
    DoBatchResult y0 = predict_do_batch(f.model, f.completions, DoQuery{{0.0}}, 16, 5);
    DoBatchResult y1 = predict_do_batch(f.model, f.completions, DoQuery{{1.0}}, 16, 5);
    std::size_t n_diff = 0;
    for (std::size_t r = 0; r < y0.mean.size(); ++r) {
        if (std::abs(y1.mean[r] - y0.mean[r]) > 1e-6) ++n_diff;
        CHECK(y0.stderr_[r] >= 0.0);
    }
    CHECK(n_diff == y0.mean.size());
}

TEST_CASE("factual prediction uses each row's own treatment") {
    auto& f = fixture();
    DoBatchResult fact = predict_factual_batch(f.model, f.completions, 16, 5);
    DoBatchResult y0 = predict_do_batch(f.model, f.completions, DoQuery{{0.0}}, 16, 5);
    DoBatchResult y1 = predict_do_batch(f.model, f.completions, DoQuery{{1.0}}, 16, 5);
    const Dataset& first = f.completions.imputations.front();
    std::size_t t_col = first.columns_with_role(Role::Treatment).front();
    for (std::size_t r = 0; r < fact.mean.size(); ++r) {
        double expected = first.values(r, t_col) == 1.0 ? y1.mean[r] : y0.mean[r];
        CHECK(fact.mean[r] == expected);
    }
}

TEST_CASE("adjustment values steer the outcome but not the shared machinery") {
    auto& f = fixture();
    ImputedSet shifted = f.completions;
    auto m_cols = shifted.imputations.front().columns_with_role(Role::Adjustment);
    for (Dataset& imp : shifted.imputations)
        for (std::size_t r = 0; r < imp.n_rows(); ++r)
            for (std::size_t c : m_cols) imp.values(r, c) += 1.0;
    DoQuery q{{1.0}};
    DoBatchResult base = predict_do_batch(f.model, f.completions, q, 16, 5);
    DoBatchResult moved = predict_do_batch(f.model, shifted, q, 16, 5);
    std::size_t n_diff = 0;
    for (std::size_t r = 0; r < base.mean.size(); ++r)
        if (std::abs(moved.mean[r] - base.mean[r]) > 1e-9) ++n_diff;
    CHECK(n_diff > base.mean.size() / 2);
}

TEST_CASE("input validation") {
    auto& f = fixture();
    CHECK_THROWS_AS(predict_do(f.model, f.completions, 0, DoQuery{{1.0, 0.0}}, 8, 1),
                    std::invalid_argument);  // too many treatment values
    CHECK_THROWS_AS(predict_do(f.model, f.completions, 99999, DoQuery{{1.0}}, 8, 1),
                    std::out_of_range);
    CHECK_THROWS_AS(predict_do(f.model, f.completions, 0, DoQuery{{1.0}}, 0, 1),
                    std::invalid_argument);  // zero latent samples
    ImputedSet empty;
    CHECK_THROWS_AS(predict_do_batch(f.model, empty, DoQuery{{1.0}}, 8, 1),
                    std::invalid_argument);
}

TEST_CASE("predictions round trip through csv") {
    auto& f = fixture();
    DoBatchResult res = predict_do_batch(f.model, f.completions, DoQuery{{1.0}}, 8, 2);
    fs::path path =
        fs::temp_directory_path() / ("cips_pred_" + std::to_string(::getpid()) + ".csv");
    save_predictions(res, path.string());
    DoBatchResult back = load_predictions(path.string());
    fs::remove(path);
    CHECK(back.mean == res.mean);
    CHECK(back.stderr_ == res.stderr_);
    CHECK(back.latent_samples == 8);
    CHECK(back.n_imputations == 3);
    CHECK(back.seed == 2);
}
