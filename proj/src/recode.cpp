#include "hlm/recode.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include "hlm/errors.hpp"

namespace hlm {

namespace {

std::optional<double> try_parse(const std::string& s) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto res = std::from_chars(b, e, v);
    if (res.ec == std::errc() && res.ptr == e && std::isfinite(v)) return v;
    return std::nullopt;
}

// Does cell i of `col` carry this category code?
bool cell_matches(const Column& col, std::size_t i, const std::string& code) {
    if (col.has_raw() && col.raw[i] == code) return true;
    if (col.is_number(i)) {
        if (auto c = try_parse(code)) return col.values[i] == *c;
    }
    return false;
}

std::string cell_text(const Column& col, std::size_t i) {
    return col.display(i);
}

}  // namespace

Dataset apply_categorical_map(const Dataset& ds, const CategoricalMap& rule) {
    const Column& src = ds.column(rule.source);
    Column out;
    out.values.resize(ds.n_rows(), std::nan(""));
    out.kinds.resize(ds.n_rows(), Cell::Missing);
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        if (src.is_missing(r)) continue;
        bool hit = false;
        for (const auto& [code, score] : rule.mapping) {
            if (cell_matches(src, r, code)) {
                out.values[r] = score;
                out.kinds[r] = Cell::Number;
                hit = true;
                break;
            }
        }
        if (!hit && rule.unmapped == UnmappedPolicy::Error)
            throw UnmappedCategoryError(cell_text(src, r), rule.source,
                                        static_cast<long>(r + 1));
    }
    return ds.with_column(rule.output, std::move(out));
}

Dataset apply_composite_sum(const Dataset& ds, const CompositeSumRule& rule) {
    std::vector<const Column*> items;
    items.reserve(rule.items.size());
    for (const auto& name : rule.items)
        items.push_back(&ds.column(name));

    Column out;
    out.values.resize(ds.n_rows(), std::nan(""));
    out.kinds.resize(ds.n_rows(), Cell::Missing);
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        double sum = 0.0;
        bool ok = true;
        for (const Column* item : items) {
            if (item->is_missing(r)) {
                ok = false;
                break;
            }
            if (cell_matches(*item, r, rule.yes_code)) sum += 1.0;
            else if (cell_matches(*item, r, rule.no_code)) sum += 0.0;
            else {
                ok = false;  // unrecognizable item answer
                break;
            }
        }
        if (ok) {
            out.values[r] = sum;
            out.kinds[r] = Cell::Number;
        }
    }
    return ds.with_column(rule.output, std::move(out));
}

Dataset apply_ordinal_compare(const Dataset& ds, const OrdinalCompareRule& rule) {
    const Column& lhs = ds.column(rule.left);
    const Column& rhs = ds.column(rule.right);
    Column out;
    out.values.resize(ds.n_rows(), std::nan(""));
    out.kinds.resize(ds.n_rows(), Cell::Missing);
    for (std::size_t r = 0; r < ds.n_rows(); ++r) {
        if (!lhs.is_number(r) || !rhs.is_number(r)) continue;
        const double l = lhs.values[r];
        const double h = rhs.values[r];
        out.values[r] = l > h ? 1.0 : (l < h ? -1.0 : 0.0);
        out.kinds[r] = Cell::Number;
    }
    return ds.with_column(rule.output, std::move(out));
}

namespace {

// Whitespace tokenizer with double-quote grouping.
std::vector<std::string> tokenize(const std::string& line, int lineno) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i >= line.size() || line[i] == '#') break;
        std::string tok;
        if (line[i] == '"') {
            ++i;
            while (i < line.size() && line[i] != '"') tok += line[i++];
            if (i >= line.size())
                throw CodebookError(lineno, "unterminated quote");
            ++i;
        } else {
            while (i < line.size() && line[i] != ' ' && line[i] != '\t') tok += line[i++];
        }
        out.push_back(std::move(tok));
    }
    return out;
}

}  // namespace

Codebook parse_codebook(const std::string& text) {
    Codebook cb;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::vector<std::string> tok = tokenize(line, lineno);
        if (tok.empty()) continue;
        const std::string& kind = tok[0];
        if (kind == "map") {
            if (tok.size() < 5)
                throw CodebookError(lineno, "map needs output, source and at least one pair");
            CategoricalMap rule;
            rule.output = tok[1];
            rule.source = tok[2];
            std::size_t i = 3;
            if (tok[i] == "policy=error") { rule.unmapped = UnmappedPolicy::Error; ++i; }
            else if (tok[i] == "policy=missing") { rule.unmapped = UnmappedPolicy::Missing; ++i; }
            if ((tok.size() - i) % 2 != 0 || tok.size() == i)
                throw CodebookError(lineno, "map pairs must be CODE SCORE [CODE SCORE ...]");
            for (; i < tok.size(); i += 2) {
                auto score = try_parse(tok[i + 1]);
                if (!score)
                    throw CodebookError(lineno, "score \"" + tok[i + 1] + "\" is not a number");
                for (const auto& [code, s] : rule.mapping)
                    if (code == tok[i])
                        throw CodebookError(lineno, "duplicate source code \"" + tok[i] + "\"");
                rule.mapping.emplace_back(tok[i], *score);
            }
            cb.rules.emplace_back(std::move(rule));
        } else if (kind == "sum") {
            if (tok.size() < 5)
                throw CodebookError(lineno, "sum needs output, yes code, no code, items");
            CompositeSumRule rule;
            rule.output = tok[1];
            rule.yes_code = tok[2];
            rule.no_code = tok[3];
            rule.items.assign(tok.begin() + 4, tok.end());
            cb.rules.emplace_back(std::move(rule));
        } else if (kind == "compare") {
            if (tok.size() != 4)
                throw CodebookError(lineno, "compare needs output, left, right");
            OrdinalCompareRule rule;
            rule.output = tok[1];
            rule.left = tok[2];
            rule.right = tok[3];
            cb.rules.emplace_back(std::move(rule));
        } else {
            throw CodebookError(lineno, "unknown rule kind \"" + kind + "\"");
        }
    }
    return cb;
}

Codebook load_codebook(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open codebook: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_codebook(buf.str());
}

std::pair<Dataset, std::vector<RuleAudit>> apply_codebook(const Dataset& ds,
                                                          const Codebook& cb) {
    Dataset cur = ds;
    std::vector<RuleAudit> audits;
    for (const auto& rule : cb.rules) {
        RuleAudit a;
        if (const auto* m = std::get_if<CategoricalMap>(&rule)) {
            a.kind = "map";
            a.output = m->output;
            const Column& src = cur.column(m->source);
            cur = apply_categorical_map(cur, *m);
            const Column& out = cur.column(m->output);
            for (std::size_t r = 0; r < cur.n_rows(); ++r) {
                if (out.is_number(r)) ++a.applied;
                else if (src.is_missing(r)) ++a.missing;
                else ++a.unmapped_to_missing;
            }
        } else if (const auto* s = std::get_if<CompositeSumRule>(&rule)) {
            a.kind = "sum";
            a.output = s->output;
            cur = apply_composite_sum(cur, *s);
            const Column& out = cur.column(s->output);
            for (std::size_t r = 0; r < cur.n_rows(); ++r)
                out.is_number(r) ? ++a.applied : ++a.missing;
        } else if (const auto* c = std::get_if<OrdinalCompareRule>(&rule)) {
            a.kind = "compare";
            a.output = c->output;
            cur = apply_ordinal_compare(cur, *c);
            const Column& out = cur.column(c->output);
            for (std::size_t r = 0; r < cur.n_rows(); ++r)
                out.is_number(r) ? ++a.applied : ++a.missing;
        }
        audits.push_back(std::move(a));
    }
    return {std::move(cur), std::move(audits)};
}

}  // namespace hlm
