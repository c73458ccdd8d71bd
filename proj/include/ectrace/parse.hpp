// Text and JSON front ends: the Fock expression grammar, the formal
// vector-field grammar, and the chain JSON schema.
//
// Fock grammar: generators by name (presets use b<i>, g<i>, c<i>, d<i>),
// prefix D^k for the k-th derivative, suffix ! for the dagger, constants
// i, pi, hbar, imtau, operators + - * / ^ and parentheses, complex literals
// like 1.5 or 2j.
#ifndef ECTRACE_PARSE_HPP
#define ECTRACE_PARSE_HPP

#include <cctype>
#include <optional>

#include "ectrace/witten.hpp"

#include <json.hpp>

namespace ect {

struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, size_t pos)
        : std::runtime_error(msg + " at position " + std::to_string(pos)), position(pos) {}
    size_t position;
};

namespace detail_parse {

struct Lexer {
    std::string src;
    size_t pos = 0;

    void skip() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }
    bool eof() {
        skip();
        return pos >= src.size();
    }
    char peek() {
        skip();
        return pos < src.size() ? src[pos] : '\0';
    }
    bool accept(char c) {
        skip();
        if (pos < src.size() && src[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    std::optional<std::string> ident() {
        skip();
        size_t s = pos;
        if (s >= src.size() || !(std::isalpha(static_cast<unsigned char>(src[s])) || src[s] == '_'))
            return std::nullopt;
        size_t e = s;
        while (e < src.size() &&
               (std::isalnum(static_cast<unsigned char>(src[e])) || src[e] == '_'))
            ++e;
        pos = e;
        return src.substr(s, e - s);
    }
    std::optional<double> number() {
        skip();
        size_t s = pos;
        char* end = nullptr;
        double v = std::strtod(src.c_str() + s, &end);
        if (end == src.c_str() + s) return std::nullopt;
        pos = size_t(end - src.c_str());
        return v;
    }
    long long integer() {
        skip();
        bool neg = accept('-');
        size_t s = pos;
        long long v = 0;
        bool any = false;
        while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos]))) {
            v = v * 10 + (src[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw ParseError("expected integer", s);
        return neg ? -v : v;
    }
};

}  // namespace detail_parse

class FockParser {
  public:
    FockParser(const SymplecticSpace& sp, std::optional<double> imTau = std::nullopt)
        : sp_(&sp), imTau_(imTau) {}

    FockElement<Scalar> parse(const std::string& text) const {
        detail_parse::Lexer lx{text};
        FockElement<Scalar> v = parseExpr(lx);
        if (!lx.eof()) throw ParseError("unexpected trailing input", lx.pos);
        return v;
    }

  private:
    using F = FockElement<Scalar>;

    F scalarElem(Scalar s) const { return F::vacuum(*sp_).scaled(s); }

    F parseExpr(detail_parse::Lexer& lx) const {
        F acc = parseTerm(lx);
        while (true) {
            if (lx.accept('+')) acc = acc + parseTerm(lx);
            else if (lx.accept('-')) acc = acc - parseTerm(lx);
            else return acc;
        }
    }
    F parseTerm(detail_parse::Lexer& lx) const {
        F acc = parsePower(lx);
        while (true) {
            if (lx.accept('*')) acc = acc * parsePower(lx);
            else if (lx.accept('/')) acc = acc * invertScalar(parsePower(lx), lx.pos);
            else if (lx.peek() == 'D' || std::isalpha(static_cast<unsigned char>(lx.peek()))) {
                // juxtaposition, e.g. "D^2 g1!" after a coefficient
                acc = acc * parsePower(lx);
            } else {
                return acc;
            }
        }
    }
    F parsePower(detail_parse::Lexer& lx) const {
        F base = parseAtom(lx);
        if (lx.accept('^')) {
            long long e = lx.integer();
            if (e < 0) return invertScalar(powInt(base, -e), lx.pos);
            return powInt(base, e);
        }
        return base;
    }
    F powInt(F base, long long e) const {
        F acc = F::vacuum(*sp_);
        for (long long t = 0; t < e; ++t) acc = acc * base;
        return acc;
    }
    F invertScalar(const F& x, size_t pos) const {
        // invertible elements: a single vacuum term with one hbar power
        if (x.termCount() != 1 || !x.terms().begin()->first.empty())
            throw ParseError("division by a non-scalar", pos);
        const Scalar& s = x.terms().begin()->second;
        int pw = 0;
        cx val(0.0);
        int found = 0;
        for (int p = s.lo(); p <= s.hi(); ++p)
            if (s.coeff(p) != cx(0.0)) {
                pw = p;
                val = s.coeff(p);
                ++found;
            }
        if (found != 1) throw ParseError("division by a multi-term scalar", pos);
        return scalarElem(Scalar::monomial(-pw, 1.0 / val));
    }

    F parseAtom(detail_parse::Lexer& lx) const {
        if (lx.accept('(')) {
            F v = parseExpr(lx);
            if (!lx.accept(')')) throw ParseError("expected ')'", lx.pos);
            return v;
        }
        if (lx.accept('-')) return -parseAtom(lx);
        size_t save = lx.pos;
        if (auto num = lx.number()) {
            // complex literal: trailing j
            if (lx.pos < lx.src.size() && lx.src[lx.pos] == 'j') {
                ++lx.pos;
                return scalarElem(Scalar::constant(cx(0.0, *num)));
            }
            return scalarElem(Scalar::constant(cx(*num, 0.0)));
        }
        lx.pos = save;
        // derivative prefix
        unsigned deriv = 0;
        {
            size_t s2 = lx.pos;
            lx.skip();
            if (lx.pos < lx.src.size() && lx.src[lx.pos] == 'D') {
                size_t dPos = lx.pos;
                ++lx.pos;
                if (lx.accept('^')) {
                    deriv = unsigned(lx.integer());
                } else {
                    lx.pos = dPos;  // a name starting with D, not a prefix
                }
            }
            if (deriv == 0 && lx.pos == s2) lx.pos = s2;
        }
        auto name = lx.ident();
        if (!name) throw ParseError("expected a generator, constant or number", lx.pos);
        if (deriv == 0) {
            if (*name == "i") return scalarElem(Scalar::constant(cx(0.0, 1.0)));
            if (*name == "pi") return scalarElem(Scalar::constant(cx(kPi, 0.0)));
            if (*name == "hbar") return scalarElem(Scalar::monomial(1, cx(1.0, 0.0)));
            if (*name == "imtau") {
                if (!imTau_) throw ParseError("imtau used without a modulus", lx.pos);
                return scalarElem(Scalar::constant(cx(*imTau_, 0.0)));
            }
        }
        auto idx = sp_->tryIndexOf(*name);
        if (!idx) throw ParseError("unknown generator name: " + *name, lx.pos);
        bool dag = lx.accept('!');
        return F::generator(*sp_, *name, deriv, dag);
    }

    const SymplecticSpace* sp_;
    std::optional<double> imTau_;
};

inline FockElement<Scalar> parseFock(const std::string& text, const SymplecticSpace& sp,
                                     std::optional<double> imTau = std::nullopt) {
    return FockParser(sp, imTau).parse(text);
}

// canonical print; parseFock(printFock(x)) == x on canonical forms
inline std::string printFock(const FockElement<Scalar>& x) { return x.str(); }

// ---------------------------------------------------------------------------
// Vector-field grammar: sums of `c * y1^a y2^b d/dy3` plus bracketed
// one-form parts `[ y1^a dy2 ]`.

inline FormalVectorField parseVectorField(const std::string& text, int N) {
    FormalVectorField out;
    out.N = N;
    detail_parse::Lexer lx{text};
    bool negate = false;
    bool inBracket = false;
    while (!lx.eof()) {
        if (lx.accept('+')) continue;
        if (lx.accept('-')) {
            negate = !negate;
            continue;
        }
        if (lx.accept('[')) {
            inBracket = true;
            continue;
        }
        if (lx.accept(']')) {
            inBracket = false;
            continue;
        }
        // one term
        cx coeff(1.0, 0.0);
        if (auto num = lx.number()) {
            coeff = cx(*num, 0.0);
            lx.accept('*');
        }
        std::vector<int> expo(size_t(N), 0);
        int dir = -1;
        bool isForm = false;
        while (true) {
            lx.skip();
            size_t save = lx.pos;
            auto id = lx.ident();
            if (!id) break;
            std::string s = *id;
            if (s == "d" && lx.accept('/')) {
                auto id2 = lx.ident();
                if (!id2 || id2->size() < 3 || id2->substr(0, 2) != "dy")
                    throw ParseError("expected dy<j> after d/", lx.pos);
                dir = std::stoi(std::string(id2->substr(2))) - 1;
                break;
            }
            if (s.size() >= 3 && s.substr(0, 2) == "dy") {
                dir = std::stoi(std::string(s.substr(2))) - 1;
                isForm = true;
                break;
            }
            if (s[0] == 'y') {
                int yi = std::stoi(std::string(s.substr(1))) - 1;
                if (yi < 0 || yi >= N) throw ParseError("y index out of range", save);
                int e = 1;
                if (lx.accept('^')) e = int(lx.integer());
                expo[size_t(yi)] += e;
                lx.accept('*');
                continue;
            }
            throw ParseError("unexpected token in vector field: " + s, save);
        }
        if (dir < 0 || dir >= N) throw ParseError("missing or bad direction", lx.pos);
        if (negate) coeff = -coeff;
        negate = false;
        auto key = std::make_pair(expo, dir);
        if (isForm || inBracket) out.form[key] += coeff;
        else out.vec[key] += coeff;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Chain JSON schema:
// { "points": ["z1", ...],
//   "terms": [ { "coeff": { "scalar": "<fock scalar>",
//                           "props": [{"a": int, "from": "zi", "to": "zj"}],
//                           "dzbar": ["zi"...], "dz": ["zi"...] },
//               "insertions": [ {"point": "zi", "expr": "<fock>",
//                                 "shift": true, "dzbar": false} ] } ] }

struct ChainJsonError : std::runtime_error {
    ChainJsonError(const std::string& msg, const std::string& pointer)
        : std::runtime_error(msg + " (at " + pointer + ")"), path(pointer) {}
    std::string path;
};

inline Chain chainFromJson(const nlohmann::json& j, const ChainContext& cc) {
    using nlohmann::json;
    if (!j.contains("points") || !j["points"].is_array())
        throw ChainJsonError("missing points array", "/points");
    std::map<std::string, unsigned> pointIndex;
    for (const auto& p : j["points"]) {
        if (!p.is_string()) throw ChainJsonError("point labels must be strings", "/points");
        unsigned idx = unsigned(pointIndex.size());
        pointIndex[p.get<std::string>()] = idx;
    }
    int n = int(pointIndex.size());
    if (n == 0) throw ChainJsonError("empty point list", "/points");
    Chain out(cc.space, n);
    if (!j.contains("terms")) return out;  // zero chain
    if (!j["terms"].is_array()) throw ChainJsonError("terms must be an array", "/terms");
    FockParser parser(*cc.space, cc.ell->imTau());

    size_t ti = 0;
    for (const auto& term : j["terms"]) {
        std::string base = "/terms/" + std::to_string(ti);
        Chain::Key key;
        Scalar coeff = Scalar::one();
        auto lookup = [&](const json& v, const std::string& path) -> unsigned {
            if (!v.is_string() || !pointIndex.count(v.get<std::string>()))
                throw ChainJsonError("unknown point label", path);
            return pointIndex.at(v.get<std::string>());
        };
        if (term.contains("coeff")) {
            const auto& c = term["coeff"];
            if (c.contains("scalar")) {
                FockElement<Scalar> s;
                try {
                    s = parser.parse(c["scalar"].get<std::string>());
                } catch (const ParseError& e) {
                    throw ChainJsonError(e.what(), base + "/coeff/scalar");
                }
                if (s.termCount() != 1 || !s.terms().begin()->first.empty())
                    throw ChainJsonError("coefficient scalar must be a pure scalar",
                                         base + "/coeff/scalar");
                coeff = s.terms().begin()->second;
            }
            if (c.contains("props")) {
                size_t pi = 0;
                for (const auto& pr : c["props"]) {
                    std::string pp = base + "/coeff/props/" + std::to_string(pi);
                    unsigned from = lookup(pr.at("from"), pp + "/from");
                    unsigned to = lookup(pr.at("to"), pp + "/to");
                    int a = pr.value("a", 0);
                    if (a < 0) throw ChainJsonError("negative derivative order", pp + "/a");
                    int sg = appendEdge(key.form, from, to, unsigned(a));
                    if (sg < 0) coeff = -coeff;
                    ++pi;
                }
                std::sort(key.form.edges.begin(), key.form.edges.end());
            }
            if (c.contains("dzbar"))
                for (const auto& p : c["dzbar"]) key.form.dzbar |= (1u << lookup(p, base + "/coeff/dzbar"));
            if (c.contains("dz"))
                for (const auto& p : c["dz"]) key.form.dz |= (1u << lookup(p, base + "/coeff/dz"));
        }
        FockElement<Scalar> insertion = FockElement<Scalar>::vacuum(*cc.space);
        if (term.contains("insertions")) {
            size_t ii = 0;
            for (const auto& ins : term["insertions"]) {
                std::string ip = base + "/insertions/" + std::to_string(ii);
                unsigned pt = lookup(ins.at("point"), ip + "/point");
                FockElement<Scalar> e;
                try {
                    e = parser.parse(ins.at("expr").get<std::string>());
                } catch (const ParseError& pe) {
                    throw ChainJsonError(pe.what(), ip + "/expr");
                }
                // retag to the point
                FockElement<Scalar> tagged(cc.space);
                for (const auto& [m, c2] : e.terms()) {
                    Monomial mm;
                    for (Var v : m) mm.push_back(varAtPoint(v, pt));
                    std::sort(mm.begin(), mm.end());
                    tagged.addTerm(mm, c2);
                }
                insertion = insertion * tagged;
                if (ins.value("shift", true)) {
                    if (key.form.dz & (1u << pt))
                        throw ChainJsonError("duplicate shift at point", ip + "/shift");
                    key.form.dz |= (1u << pt);
                }
                if (ins.value("dzbar", false)) {
                    if (key.form.dzbar & (1u << pt))
                        throw ChainJsonError("duplicate dzbar at point", ip + "/dzbar");
                    key.form.dzbar |= (1u << pt);
                }
                ++ii;
            }
        }
        for (const auto& [m, c2] : insertion.terms()) {
            Chain::Key k2 = key;
            k2.ins = m;
            out.addTerm(k2, coeff * c2);
        }
        ++ti;
    }
    return out;
}

}  // namespace ect

#endif
