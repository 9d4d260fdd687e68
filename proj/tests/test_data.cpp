#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "cips/dataset.hpp"

using namespace cips;
namespace fs = std::filesystem;

namespace {

std::vector<VariableSpec> mixed_schema() {
    return {
        {"t", Role::Treatment, Kind::Binary, {"0", "1"}},
        {"x1", Role::Confounder, Kind::Continuous, {}},
        {"x2", Role::Confounder, Kind::Nominal, {"a", "b", "c"}},
        {"m", Role::Adjustment, Kind::Continuous, {}},
        {"y", Role::Outcome, Kind::Continuous, {}},
    };
}

Dataset small_dataset() {
    Dataset ds;
    ds.schema = mixed_schema();
    ds.values = Matrix(4, 5,
                       {1, 0.25, 0, 1.5, 10.0,
                        0, -1.75, 2, -0.5, 8.25,
                        1, 0.125, 1, 2.0, 12.5,
                        0, 3.5, 0, 0.75, 9.0});
    ds.mask.assign(20, 1);
    return ds;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("cips_test_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
};

}  // namespace

TEST_CASE("schema json round trip") {
    auto schema = mixed_schema();
    auto back = schema_from_json(schema_to_json(schema));
    CHECK(back == schema);
}

TEST_CASE("schema validation rejects bad shapes") {
    auto schema = mixed_schema();
    schema[4].kind = Kind::Binary;
    schema[4].categories = {"0", "1"};
    CHECK_THROWS_AS(validate_schema(schema), std::runtime_error);  // outcome not continuous

    schema = mixed_schema();
    schema.pop_back();
    CHECK_THROWS_AS(validate_schema(schema), std::runtime_error);  // no outcome

    schema = mixed_schema();
    schema[0].categories = {"0", "1", "2"};
    CHECK_THROWS_AS(validate_schema(schema), std::runtime_error);  // binary with 3 categories

    schema = mixed_schema();
    schema[2].categories.clear();
    CHECK_THROWS_AS(validate_schema(schema), std::runtime_error);  // nominal without categories
}

TEST_CASE("csv round trip is bit exact and keeps missing cells") {
    TempDir dir;
    Dataset ds = small_dataset();
    ds.values(1, 1) = std::nan("");
    ds.set_observed(1, 1, false);
    ds.values(2, 2) = std::nan("");
    ds.set_observed(2, 2, false);

    std::string csv = (dir.path / "d.csv").string();
    std::string schema = (dir.path / "s.json").string();
    save_dataset(ds, csv);
    save_schema(ds.schema, schema);
    Dataset back = load_dataset(csv, schema);
    CHECK(back == ds);
    CHECK_FALSE(back.observed(1, 1));
    CHECK_FALSE(back.observed(2, 2));
    CHECK(back.values(3, 1) == ds.values(3, 1));  // exact, not approximate

    // a second save/load must reproduce the file byte for byte
    std::string csv2 = (dir.path / "d2.csv").string();
    save_dataset(back, csv2);
    std::ifstream a(csv), b(csv2);
    std::string sa((std::istreambuf_iterator<char>(a)), {});
    std::string sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
}

TEST_CASE("load rejects missing cells outside confounder columns") {
    TempDir dir;
    std::string schema = (dir.path / "s.json").string();
    save_schema(mixed_schema(), schema);
    std::string csv = (dir.path / "d.csv").string();
    {
        std::ofstream out(csv);
        out << "t,x1,x2,m,y\n";
        out << "1,0.5,a,,10.0\n";  // missing adjustment cell
    }
    CHECK_THROWS_AS(load_dataset(csv, schema), std::runtime_error);
}

TEST_CASE("load maps category labels to indices") {
    TempDir dir;
    std::string schema = (dir.path / "s.json").string();
    save_schema(mixed_schema(), schema);
    std::string csv = (dir.path / "d.csv").string();
    {
        std::ofstream out(csv);
        out << "t,x1,x2,m,y\n";
        out << "1,0.5,c,0.25,10.0\n";
        out << "0,1.5,a,0.5,11.0\n";
    }
    Dataset ds = load_dataset(csv, schema);
    CHECK(ds.values(0, 2) == 2.0);
    CHECK(ds.values(1, 2) == 0.0);
    CHECK(ds.values(0, 0) == 1.0);
}

TEST_CASE("split produces disjoint 60/20/20 partitions deterministically") {
    Dataset ds;
    ds.schema = mixed_schema();
    std::size_t n = 100;
    ds.values = Matrix(n, 5);
    for (std::size_t r = 0; r < n; ++r) {
        ds.values(r, 0) = r % 2;
        ds.values(r, 1) = static_cast<double>(r);
        ds.values(r, 2) = r % 3;
        ds.values(r, 3) = 0.5 * r;
        ds.values(r, 4) = 1.0 + r;
    }
    ds.mask.assign(n * 5, 1);

    SplitResult sp = split(ds, 0.6, 0.2, 7);
    CHECK(sp.train.n_rows() == 60);
    CHECK(sp.valid.n_rows() == 20);
    CHECK(sp.test.n_rows() == 20);

    std::vector<bool> seen(n, false);
    for (auto r : sp.train_rows) seen[r] = true;
    for (auto r : sp.valid_rows) {
        CHECK_FALSE(seen[r]);
        seen[r] = true;
    }
    for (auto r : sp.test_rows) {
        CHECK_FALSE(seen[r]);
        seen[r] = true;
    }
    CHECK(std::count(seen.begin(), seen.end(), true) == static_cast<long>(n));

    SplitResult sp2 = split(ds, 0.6, 0.2, 7);
    CHECK(sp.train_rows == sp2.train_rows);
    SplitResult sp3 = split(ds, 0.6, 0.2, 8);
    CHECK(sp.train_rows != sp3.train_rows);
}

TEST_CASE("simulate_missingness masks only confounder cells at the target rate") {
    Dataset ds;
    ds.schema = mixed_schema();
    std::size_t n = 5000;
    ds.values = Matrix(n, 5, 1.0);
    ds.mask.assign(n * 5, 1);

    Dataset none = simulate_missingness(ds, MissScenario::None, 3);
    CHECK(none.fully_observed());

    for (auto [scenario, rate] : {std::pair{MissScenario::Moderate, 0.3},
                                  std::pair{MissScenario::Substantial, 0.6}}) {
        Dataset masked = simulate_missingness(ds, scenario, 3);
        std::size_t missing = 0;
        for (std::size_t r = 0; r < n; ++r) {
            CHECK(masked.observed(r, 0));
            CHECK(masked.observed(r, 3));
            CHECK(masked.observed(r, 4));
            for (std::size_t c : {std::size_t{1}, std::size_t{2}})
                if (!masked.observed(r, c)) missing++;
        }
        double frac = static_cast<double>(missing) / (2.0 * n);
        CHECK(frac == doctest::Approx(rate).epsilon(0.05));
        Dataset again = simulate_missingness(ds, scenario, 3);
        CHECK(again == masked);
        CHECK(again.mask == masked.mask);
    }
}

TEST_CASE("column-prefix flavor masks whole trailing confounder columns") {
    Dataset ds;
    ds.schema = mixed_schema();
    std::size_t n = 50;
    ds.values = Matrix(n, 5, 1.0);
    ds.mask.assign(n * 5, 1);
    // two confounder columns, rate 0.6 -> one trailing column wholly masked
    Dataset masked = simulate_missingness(ds, MissScenario::Substantial, 5, 0.3, 0.6,
                                          MissFlavor::ColumnPrefix);
    for (std::size_t r = 0; r < n; ++r) {
        CHECK(masked.observed(r, 1));
        CHECK_FALSE(masked.observed(r, 2));
        CHECK(masked.observed(r, 0));
        CHECK(masked.observed(r, 3));
        CHECK(masked.observed(r, 4));
    }
}

TEST_CASE("standardize and invert_scaling round trip") {
    Dataset ds = small_dataset();
    auto [scaled, params] = standardize(ds);
    // continuous columns have mean 0 and population std 1
    for (std::size_t c : {std::size_t{1}, std::size_t{3}, std::size_t{4}}) {
        double mean = 0.0, var = 0.0;
        for (std::size_t r = 0; r < ds.n_rows(); ++r) mean += scaled.values(r, c);
        mean /= ds.n_rows();
        for (std::size_t r = 0; r < ds.n_rows(); ++r) {
            double d = scaled.values(r, c) - mean;
            var += d * d;
        }
        var /= ds.n_rows();
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(var == doctest::Approx(1.0).epsilon(1e-12));
    }
    // categorical columns untouched
    CHECK(scaled.values(0, 0) == ds.values(0, 0));
    CHECK(scaled.values(1, 2) == ds.values(1, 2));
    CHECK_FALSE(params.mean_std[0].has_value());
    CHECK(params.mean_std[1].has_value());

    Dataset back = invert_scaling(scaled, params);
    for (std::size_t i = 0; i < ds.values.size(); ++i)
        CHECK(back.values.data[i] == doctest::Approx(ds.values.data[i]).epsilon(1e-12));
}

TEST_CASE("standardize rejects constant continuous columns") {
    Dataset ds = small_dataset();
    for (std::size_t r = 0; r < ds.n_rows(); ++r) ds.values(r, 3) = 2.5;
    CHECK_THROWS(standardize(ds));
}

TEST_CASE("dataset equality ignores values under unobserved cells") {
    Dataset a = small_dataset();
    Dataset b = a;
    a.set_observed(0, 1, false);
    b.set_observed(0, 1, false);
    a.values(0, 1) = 123.0;
    b.values(0, 1) = -9.0;
    CHECK(a == b);
    b.set_observed(0, 1, true);
    CHECK_FALSE(a == b);
}
