#include <doctest.h>

#include <algorithm>

#include "helpers.hpp"
#include "hlm/errors.hpp"
#include "hlm/recode.hpp"
#include "hlm/rng.hpp"

using namespace hlm;
using testutil::make_dataset;

namespace {

// Dataset whose `edu` column carries raw questionnaire category text.
Dataset education_dataset(const std::vector<std::string>& labels) {
    Column edu;
    for (const auto& s : labels) {
        edu.raw.push_back(s);
        edu.kinds.push_back(s.empty() ? Cell::Missing : Cell::Text);
        edu.values.push_back(std::nan(""));
    }
    std::vector<double> id(labels.size(), 1.0);
    std::vector<Column> cols{Column::from_values(id), edu};
    return Dataset({"school", "edu"}, std::move(cols), "school");
}

CategoricalMap parent_education_map(const std::string& out, const std::string& src,
                                    UnmappedPolicy policy = UnmappedPolicy::Error) {
    return CategoricalMap{out,
                          src,
                          {{"Bachelor's Degree or higher", 5},
                           {"Associate's Degree", 4},
                           {"High school", 3},
                           {"Lower-Secondary", 2},
                           {"Primary or lower", 1},
                           {"The student doesn't know", 0}},
                          policy};
}

}  // namespace

TEST_CASE("categorical map: parent education table") {
    Dataset ds = education_dataset({"Bachelor's Degree or higher", "The student doesn't know",
                                    "High school", ""});
    Dataset out = apply_categorical_map(ds, parent_education_map("mo", "edu"));
    const Column& mo = out.column("mo");
    CHECK(mo.values[0] == 5.0);
    CHECK(mo.values[1] == 0.0);
    CHECK(mo.values[2] == 3.0);
    CHECK(mo.is_missing(3));  // missing stays missing
}

TEST_CASE("categorical map: unmapped category under the error policy") {
    Dataset ds = education_dataset({"Doctorate*"});
    try {
        apply_categorical_map(ds, parent_education_map("mo", "edu"));
        FAIL("expected UnmappedCategoryError");
    } catch (const UnmappedCategoryError& e) {
        CHECK(e.category() == "Doctorate*");
        CHECK(e.row() == 1);
        CHECK(std::string(e.what()).find("Doctorate*") != std::string::npos);
    }
}

TEST_CASE("categorical map: unmapped category under the missing policy") {
    Dataset ds = education_dataset({"Doctorate*", "High school"});
    Dataset out = apply_categorical_map(
        ds, parent_education_map("mo", "edu", UnmappedPolicy::Missing));
    CHECK(out.column("mo").is_missing(0));
    CHECK(out.column("mo").values[1] == 3.0);
}

TEST_CASE("categorical map: numeric codes match numerically") {
    Dataset ds = make_dataset({"id", "band"}, {{1, 1, 1}, {1, 2, 3}}, "id");
    CategoricalMap rule{"score", "band", {{"1", 10}, {"2", 20}, {"3", 30}}, UnmappedPolicy::Error};
    Dataset out = apply_categorical_map(ds, rule);
    CHECK(out.column("score").values[0] == 10.0);
    CHECK(out.column("score").values[2] == 30.0);
}

TEST_CASE("composite sum: six yes / six no / mixed") {
    auto items = std::vector<std::string>{"i1", "i2", "i3", "i4", "i5", "i6"};
    auto build = [&](const std::vector<std::string>& answers_per_item) {
        std::vector<std::string> names{"school"};
        std::vector<Column> cols{Column::from_values({1.0})};
        for (std::size_t k = 0; k < items.size(); ++k) {
            Column c;
            c.raw.push_back(answers_per_item[k]);
            c.kinds.push_back(answers_per_item[k].empty() ? Cell::Missing : Cell::Text);
            c.values.push_back(std::nan(""));
            names.push_back(items[k]);
            cols.push_back(std::move(c));
        }
        return Dataset(names, std::move(cols), "school");
    };
    CompositeSumRule rule{"hp", "Yes", "No", items};

    Dataset all_yes = apply_composite_sum(build({"Yes", "Yes", "Yes", "Yes", "Yes", "Yes"}), rule);
    CHECK(all_yes.column("hp").values[0] == 6.0);

    Dataset all_no = apply_composite_sum(build({"No", "No", "No", "No", "No", "No"}), rule);
    CHECK(all_no.column("hp").values[0] == 0.0);

    Dataset mixed = apply_composite_sum(build({"Yes", "Yes", "No", "Yes", "No", "Yes"}), rule);
    CHECK(mixed.column("hp").values[0] == 4.0);  // four yes, two no

    Dataset with_missing = apply_composite_sum(build({"Yes", "", "No", "Yes", "No", "Yes"}), rule);
    CHECK(with_missing.column("hp").is_missing(0));
}

TEST_CASE("composite sum: absent item column is an error") {
    Dataset ds = make_dataset({"id", "i1"}, {{1}, {1}}, "id");
    CompositeSumRule rule{"hp", "Yes", "No", {"i1", "i2"}};
    CHECK_THROWS_AS(apply_composite_sum(ds, rule), DataError);
}

TEST_CASE("ordinal compare: affluent vs disadvantaged bands") {
    Dataset ds = make_dataset({"id", "aff", "dis"},
                              {{1, 1, 1}, {3, 2, 1}, {1, 2, 4}}, "id");
    OrdinalCompareRule rule{"stueco", "aff", "dis"};
    Dataset out = apply_ordinal_compare(ds, rule);
    CHECK(out.column("stueco").values[0] == 1.0);   // 3 > 1
    CHECK(out.column("stueco").values[1] == 0.0);   // tie
    CHECK(out.column("stueco").values[2] == -1.0);  // 2 < 4
}

TEST_CASE("ordinal compare: missing input propagates") {
    Dataset ds = make_dataset({"id", "aff", "dis"}, {{1}, {3}, {1}}, "id");
    Column c = ds.column("dis");
    c.kinds[0] = Cell::Missing;
    Dataset out = apply_ordinal_compare(ds.with_column("dis", c), {"stueco", "aff", "dis"});
    CHECK(out.column("stueco").is_missing(0));
}

TEST_CASE("school location map onto {1, 0, -1}") {
    Column loc;
    for (const auto* s : {"high income", "medium income", "low income"}) {
        loc.raw.push_back(s);
        loc.kinds.push_back(Cell::Text);
        loc.values.push_back(std::nan(""));
    }
    std::vector<Column> cols{Column::from_values({1, 1, 1}), loc};
    Dataset ds({"school", "loc"}, std::move(cols), "school");
    CategoricalMap rule{"schlo",
                        "loc",
                        {{"high income", 1}, {"medium income", 0}, {"low income", -1}},
                        UnmappedPolicy::Error};
    Dataset out = apply_school_location_map(ds, rule);
    CHECK(out.column("schlo").values[0] == 1.0);
    CHECK(out.column("schlo").values[1] == 0.0);
    CHECK(out.column("schlo").values[2] == -1.0);
}

TEST_CASE("property: recoding is row-local (commutes with row permutation)") {
    Rng rng(11);
    const int n = 40;
    std::vector<std::string> labels = {"Bachelor's Degree or higher", "Associate's Degree",
                                       "High school", "Lower-Secondary", "Primary or lower",
                                       "The student doesn't know"};
    std::vector<std::string> cells(n);
    for (int i = 0; i < n; ++i) cells[i] = labels[rng.below(labels.size())];

    Dataset ds = education_dataset(cells);
    Dataset recoded = apply_categorical_map(ds, parent_education_map("mo", "edu"));

    // reverse row order, recode, compare against reversed recode output
    std::vector<std::string> rev(cells.rbegin(), cells.rend());
    Dataset ds_rev = education_dataset(rev);
    Dataset recoded_rev = apply_categorical_map(ds_rev, parent_education_map("mo", "edu"));
    for (int i = 0; i < n; ++i)
        CHECK(recoded.column("mo").values[i] ==
              recoded_rev.column("mo").values[n - 1 - i]);
}

TEST_CASE("property: composite sum stays in {missing} U {0..6}") {
    Rng rng(12);
    auto items = std::vector<std::string>{"i1", "i2", "i3", "i4", "i5", "i6"};
    const int n = 60;
    std::vector<std::string> names{"school"};
    std::vector<Column> cols{Column::from_values(std::vector<double>(n, 1.0))};
    for (const auto& it : items) {
        Column c;
        for (int r = 0; r < n; ++r) {
            const double u = rng.uniform();
            std::string s = u < 0.45 ? "Yes" : (u < 0.9 ? "No" : "");
            c.raw.push_back(s);
            c.kinds.push_back(s.empty() ? Cell::Missing : Cell::Text);
            c.values.push_back(std::nan(""));
        }
        names.push_back(it);
        cols.push_back(std::move(c));
    }
    Dataset ds(names, std::move(cols), "school");
    Dataset out = apply_composite_sum(ds, {"hp", "Yes", "No", items});
    const Column& hp = out.column("hp");
    for (int r = 0; r < n; ++r) {
        if (hp.is_missing(r)) continue;
        CHECK(hp.values[r] >= 0.0);
        CHECK(hp.values[r] <= 6.0);
        CHECK(hp.values[r] == std::floor(hp.values[r]));
    }
}

TEST_CASE("property: ordinal compare is antisymmetric") {
    Rng rng(13);
    const int n = 50;
    std::vector<double> id(n, 1.0), a(n), b(n);
    for (int i = 0; i < n; ++i) {
        a[i] = static_cast<double>(rng.below(5));
        b[i] = static_cast<double>(rng.below(5));
    }
    Dataset ds = make_dataset({"id", "a", "b"}, {id, a, b}, "id");
    Dataset fwd = apply_ordinal_compare(ds, {"c", "a", "b"});
    Dataset rev = apply_ordinal_compare(ds, {"c", "b", "a"});
    for (int i = 0; i < n; ++i)
        CHECK(fwd.column("c").values[i] == -rev.column("c").values[i]);
}

TEST_CASE("codebook: parse, apply, audit") {
    const std::string text =
        "# parent education\n"
        "map mo edu_mo policy=missing \"Bachelor's Degree or higher\" 5 "
        "\"Associate's Degree\" 4 \"High school\" 3 \"Lower-Secondary\" 2 "
        "\"Primary or lower\" 1 \"The student doesn't know\" 0\n"
        "sum hp Yes No i1 i2 i3 i4 i5 i6\n"
        "compare stueco aff dis\n";
    Codebook cb = parse_codebook(text);
    REQUIRE(cb.rules.size() == 3);
    CHECK(std::holds_alternative<CategoricalMap>(cb.rules[0]));
    CHECK(std::holds_alternative<CompositeSumRule>(cb.rules[1]));
    CHECK(std::holds_alternative<OrdinalCompareRule>(cb.rules[2]));

    const auto& m = std::get<CategoricalMap>(cb.rules[0]);
    CHECK(m.mapping.size() == 6);
    CHECK(m.mapping[0].first == "Bachelor's Degree or higher");
    CHECK(m.mapping[0].second == 5.0);
    CHECK(m.unmapped == UnmappedPolicy::Missing);
}

TEST_CASE("codebook: malformed lines carry the line number") {
    try {
        parse_codebook("map mo edu\n");
        FAIL("expected CodebookError");
    } catch (const CodebookError& e) {
        CHECK(e.line() == 1);
    }
    try {
        parse_codebook("# fine\nfrobnicate x y\n");
        FAIL("expected CodebookError");
    } catch (const CodebookError& e) {
        CHECK(e.line() == 2);
    }
    CHECK_THROWS_AS(parse_codebook("map out src \"a\" notanumber\n"), CodebookError);
    CHECK_THROWS_AS(parse_codebook("map out src \"a\" 1 \"a\" 2\n"), CodebookError);
    CHECK_THROWS_AS(parse_codebook("compare out a\n"), CodebookError);
}

TEST_CASE("apply_codebook: audit counts applied/missing/unmapped") {
    Dataset ds = education_dataset(
        {"High school", "", "Doctorate*", "Primary or lower"});
    Codebook cb = parse_codebook(
        "map mo edu policy=missing \"High school\" 3 \"Primary or lower\" 1\n");
    auto [out, audits] = apply_codebook(ds, cb);
    REQUIRE(audits.size() == 1);
    CHECK(audits[0].kind == "map");
    CHECK(audits[0].output == "mo");
    CHECK(audits[0].applied == 2);
    CHECK(audits[0].missing == 1);
    CHECK(audits[0].unmapped_to_missing == 1);
}
