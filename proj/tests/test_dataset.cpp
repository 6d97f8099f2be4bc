#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "hlm/dataset.hpp"
#include "hlm/errors.hpp"
#include "hlm/rng.hpp"

using namespace hlm;
using testutil::TempFile;
using testutil::make_dataset;

TEST_CASE("load_csv: three rows with one empty cell") {
    TempFile f("school,score\n1,10\n1,\n2,30\n");
    Dataset ds = load_csv(f.path(), {"score"}, "school");
    CHECK(ds.n_rows() == 3);
    const Column& score = ds.column("score");
    int missing = 0;
    for (std::size_t r = 0; r < 3; ++r)
        if (score.is_missing(r)) ++missing;
    CHECK(missing == 1);
    CHECK(score.values[0] == 10.0);
    CHECK(score.values[2] == 30.0);
}

TEST_CASE("load_csv: NA sentinel and configurable sentinel list") {
    TempFile f("school,a\n1,NA\n2,none\n");
    Dataset ds = load_csv(f.path(), {}, "school");
    CHECK(ds.column("a").is_missing(0));
    CHECK(!ds.column("a").is_missing(1));  // "none" stays text under defaults
    Dataset ds2 = load_csv(f.path(), {}, "school", {"", "NA", "none"});
    CHECK(ds2.column("a").is_missing(1));
}

TEST_CASE("load_csv: missing cluster column is an error") {
    TempFile f("a,b\n1,2\n");
    CHECK_THROWS_WITH_AS(load_csv(f.path(), {}, "school"),
                         doctest::Contains("cluster column absent"), DataError);
}

TEST_CASE("load_csv: missing file and ragged rows are distinct errors") {
    CHECK_THROWS_WITH_AS(load_csv("/nonexistent/path.csv", {}, "id"),
                         doctest::Contains("cannot open"), DataError);
    TempFile f("id,a,b\n1,2,3\n1,4\n");
    CHECK_THROWS_WITH_AS(load_csv(f.path(), {}, "id"),
                         doctest::Contains("ragged row at line 3"), DataError);
}

TEST_CASE("load_csv: quoted fields with commas") {
    TempFile f("id,edu\n1,\"Bachelor's Degree or higher\"\n2,\"a,b\"\n");
    Dataset ds = load_csv(f.path(), {}, "id");
    CHECK(ds.column("edu").raw[0] == "Bachelor's Degree or higher");
    CHECK(ds.column("edu").raw[1] == "a,b");
}

TEST_CASE("load_csv at survey scale: 5042 rows over 150 clusters") {
    std::ostringstream csv;
    csv << "school,mat\n";
    Rng rng(7);
    for (int r = 0; r < 5042; ++r)
        csv << (r % 150) + 1 << "," << 500.0 + rng.normal() << "\n";
    TempFile f(csv.str());
    Dataset ds = load_csv(f.path(), {"mat"}, "school");
    CHECK(ds.n_rows() == 5042);
    GroupIndex gi = build_group_index(ds);
    CHECK(gi.J == 150);
}

TEST_CASE("listwise_delete: basic filtering and identity case") {
    Dataset ds = make_dataset({"id", "x"}, {{1, 1, 2}, {1, 2, 3}}, "id");
    Column with_missing = ds.column("x");
    with_missing.kinds[1] = Cell::Missing;
    Dataset dsm = ds.with_column("x", with_missing);

    auto [kept, rep] = listwise_delete(dsm, {"x"});
    CHECK(kept.n_rows() == 2);
    CHECK(rep.rows_before == 3);
    CHECK(rep.rows_after == 2);
    CHECK(kept.column("x").values[0] == 1.0);
    CHECK(kept.column("x").values[1] == 3.0);

    auto [same, rep2] = listwise_delete(ds, {"x"});
    CHECK(same.n_rows() == 3);
    CHECK(rep2.rows_deleted() == 0);
    CHECK(rep2.groups_before == rep2.groups_after);
}

TEST_CASE("listwise_delete: all rows missing is an error") {
    Dataset ds = make_dataset({"id", "x"}, {{1, 2}, {0, 0}}, "id");
    Column c = ds.column("x");
    c.kinds[0] = Cell::Missing;
    c.kinds[1] = Cell::Missing;
    CHECK_THROWS_WITH_AS(listwise_delete(ds.with_column("x", c), {"x"}),
                         doctest::Contains("empty dataset after deletion"), DataError);
}

TEST_CASE("listwise_delete: groups emptied by deletion vanish") {
    // paper-scale shape: 5042 rows in 150 groups; injected missingness
    // leaves 4605 rows in 140 groups
    std::vector<double> id, x;
    std::vector<bool> miss;
    int row = 0;
    for (int j = 0; j < 150; ++j) {
        const int nj = (j < 142) ? 33 : 34;  // 142*33 + 8*34 = 4958 ... adjust below
        for (int i = 0; i < nj; ++i, ++row) {
            id.push_back(j + 1);
            x.push_back(row);
            bool m = false;
            if (j >= 140) m = true;                    // wipe the last 10 groups
            miss.push_back(m);
        }
    }
    // pad to exactly 5042 rows inside group 1
    while (row < 5042) {
        id.push_back(1);
        x.push_back(row);
        miss.push_back(false);
        ++row;
    }
    // then mark enough surviving rows missing to land on 4605
    std::size_t surviving = 0;
    for (bool m : miss)
        if (!m) ++surviving;
    std::size_t need_drop = surviving - 4605;
    for (std::size_t r = 0; r < miss.size() && need_drop > 0; ++r) {
        if (!miss[r] && id[r] == 1.0 && need_drop > 0) {
            miss[r] = true;
            --need_drop;
        }
    }
    std::vector<Column> cols{Column::from_values(id), Column::from_values(x, miss)};
    Dataset ds({"school", "v"}, std::move(cols), "school");
    REQUIRE(ds.n_rows() == 5042);

    auto [kept, rep] = listwise_delete(ds, {"v"});
    CHECK(rep.rows_before == 5042);
    CHECK(rep.rows_after == 4605);
    CHECK(rep.groups_before == 150);
    CHECK(rep.groups_after == 140);
    GroupIndex gi = build_group_index(kept);
    CHECK(gi.J == 140);
    CHECK(gi.n_bar == doctest::Approx(4605.0 / 140.0));
}

TEST_CASE("listwise_delete properties: group sizes never grow, order preserved") {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> id, x;
        std::vector<bool> miss;
        const int J = 5;
        for (int j = 0; j < J; ++j) {
            const int nj = 1 + static_cast<int>(rng.below(6));
            for (int i = 0; i < nj; ++i) {
                id.push_back(j + 1);
                x.push_back(static_cast<double>(id.size()));  // strictly increasing tag
                miss.push_back(rng.uniform() < 0.3);
            }
        }
        std::vector<Column> cols{Column::from_values(id), Column::from_values(x, miss)};
        Dataset ds({"g", "x"}, std::move(cols), "g");
        GroupIndex before = build_group_index(ds);
        std::size_t n_clean = 0;
        for (bool m : miss)
            if (!m) ++n_clean;
        if (n_clean == 0) continue;

        auto [kept, rep] = listwise_delete(ds, {"x"});
        GroupIndex after = build_group_index(kept);
        CHECK(rep.rows_after == n_clean);
        for (std::size_t j = 0; j < after.J; ++j) {
            auto it = std::find(before.ids.begin(), before.ids.end(), after.ids[j]);
            REQUIRE(it != before.ids.end());
            const std::size_t bj = static_cast<std::size_t>(it - before.ids.begin());
            CHECK(after.sizes[j] <= before.sizes[bj]);
        }
        const Column& xs = kept.column("x");
        for (std::size_t r = 1; r < kept.n_rows(); ++r)
            CHECK(xs.values[r] > xs.values[r - 1]);  // original order intact
    }
}

TEST_CASE("grand_mean_center: arithmetic and degenerate cases") {
    Dataset ds = make_dataset({"id", "x"}, {{1, 1, 2}, {1, 2, 3}}, "id");
    CenteredVariable cv = grand_mean_center(ds, "x");
    CHECK(cv.grand_mean == doctest::Approx(2.0));
    CHECK(cv.values[0] == doctest::Approx(-1.0));
    CHECK(cv.values[1] == doctest::Approx(0.0));
    CHECK(cv.values[2] == doctest::Approx(1.0));

    Dataset dc = make_dataset({"id", "c"}, {{1, 1, 2}, {7, 7, 7}}, "id");
    CenteredVariable cc = grand_mean_center(dc, "c");
    CHECK(cc.grand_mean == doctest::Approx(7.0));
    for (double v : cc.values) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("grand_mean_center: errors on absent or incomplete variables") {
    Dataset ds = make_dataset({"id", "x"}, {{1, 2}, {1, 2}}, "id");
    CHECK_THROWS_AS(grand_mean_center(ds, "nope"), DataError);
    Column c = ds.column("x");
    c.kinds[0] = Cell::Missing;
    CHECK_THROWS_AS(grand_mean_center(ds.with_column("x", c), "x"), DataError);
}

TEST_CASE("grand_mean_center: round-trip and idempotence properties") {
    Rng rng(99);
    for (int trial = 0; trial < 25; ++trial) {
        const int n = 5 + static_cast<int>(rng.below(40));
        std::vector<double> id(n, 1.0), x(n);
        for (int i = 0; i < n; ++i) {
            id[i] = 1.0 + static_cast<double>(i % 3);
            x[i] = rng.normal(50.0, 12.0);
        }
        Dataset ds = make_dataset({"id", "x"}, {id, x}, "id");
        CenteredVariable cv = grand_mean_center(ds, "x");

        double mean_centered = 0.0;
        for (std::size_t i = 0; i < cv.values.size(); ++i) {
            CHECK(cv.values[i] + cv.grand_mean == doctest::Approx(x[i]).epsilon(1e-12));
            mean_centered += cv.values[i];
        }
        mean_centered /= n;
        CHECK(std::fabs(mean_centered) < 1e-10 * std::max(1.0, std::fabs(cv.grand_mean)));

        Dataset ds2 = ds.with_column("x", Column::from_values(cv.values));
        CenteredVariable cv2 = grand_mean_center(ds2, "x");
        for (std::size_t i = 0; i < cv.values.size(); ++i)
            CHECK(std::fabs(cv2.values[i] - cv.values[i]) < 1e-10);
    }
}

TEST_CASE("build_group_index: counts, order, n_bar") {
    Dataset ds = make_dataset({"g", "x"}, {{5, 5, 9}, {1, 2, 3}}, "g");
    GroupIndex gi = build_group_index(ds);
    CHECK(gi.J == 2);
    CHECK(gi.sizes[0] == 2);
    CHECK(gi.sizes[1] == 1);
    CHECK(gi.n_bar == doctest::Approx(1.5));
    CHECK(gi.ids[0] == "5");  // first appearance order
    CHECK(gi.ids[1] == "9");
}

TEST_CASE("build_group_index: single cluster is a valid index") {
    Dataset ds = make_dataset({"g", "x"}, {{1, 1, 1}, {1, 2, 3}}, "g");
    GroupIndex gi = build_group_index(ds);
    CHECK(gi.J == 1);
    CHECK(gi.sizes[0] == 3);
}

TEST_CASE("build_group_index: 4605 rows over 140 groups gives n_bar 32.89") {
    std::vector<double> id;
    for (int j = 0; j < 140; ++j) {
        const int nj = (j < 125) ? 33 : 32;  // 125*33 + 15*32 = 4605
        for (int i = 0; i < nj; ++i) id.push_back(j + 1);
    }
    REQUIRE(id.size() == 4605);
    std::vector<double> x(id.size(), 0.0);
    Dataset ds = make_dataset({"school", "v"}, {id, x}, "school");
    GroupIndex gi = build_group_index(ds);
    CHECK(gi.J == 140);
    CHECK(std::round(gi.n_bar * 100.0) / 100.0 == doctest::Approx(32.89));
}

TEST_CASE("dataset invariants: sizes sum to n_rows on random datasets") {
    Rng rng(3);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 1 + static_cast<int>(rng.below(200));
        std::vector<double> id(n), x(n);
        for (int i = 0; i < n; ++i) {
            id[i] = static_cast<double>(rng.below(12));
            x[i] = rng.normal();
        }
        Dataset ds = make_dataset({"g", "x"}, {id, x}, "g");
        GroupIndex gi = build_group_index(ds);
        std::size_t total = 0;
        for (auto s : gi.sizes) total += s;
        CHECK(total == ds.n_rows());
        CHECK(gi.n_bar == doctest::Approx(static_cast<double>(n) / gi.J));
    }
}

TEST_CASE("dataset invariants: duplicate names and missing cluster cells rejected") {
    std::vector<Column> cols{Column::from_values({1, 2}), Column::from_values({1, 2})};
    CHECK_THROWS_AS(Dataset({"a", "a"}, std::move(cols), "a"), DataError);

    Column bad = Column::from_values({1, 2});
    bad.kinds[0] = Cell::Missing;
    std::vector<Column> cols2;
    cols2.push_back(bad);
    CHECK_THROWS_AS(Dataset({"g"}, std::move(cols2), "g"), DataError);
}

TEST_CASE("csv round trip preserves values and missingness") {
    Dataset ds = make_dataset({"g", "x"}, {{1, 1, 2}, {0.5, -3.25, 612.5}}, "g");
    Column c = ds.column("x");
    c.kinds[1] = Cell::Missing;
    Dataset dsm = ds.with_column("x", c);
    TempFile f(to_csv(dsm));
    Dataset back = load_csv(f.path(), {"x"}, "g");
    CHECK(back.n_rows() == 3);
    CHECK(back.column("x").values[0] == 0.5);
    CHECK(back.column("x").is_missing(1));
    CHECK(back.column("x").values[2] == 612.5);
}
