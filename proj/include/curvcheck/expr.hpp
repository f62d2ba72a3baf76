#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "curvcheck/errors.hpp"
#include "curvcheck/jet.hpp"

namespace curvcheck {

// Scalar expressions over variables x1..xn with + - * / ^, unary minus, the
// functions sin cos exp log sqrt tanh, and the constants pi and e.
//
// Grammar (also documented in docs/grammar.md):
//
//   expr    := term  (('+' | '-') term)*
//   term    := unary (('*' | '/') unary)*
//   unary   := '-' unary | power
//   power   := atom ('^' unary)?            -- right associative
//   atom    := number | name '(' expr ')' | name | '(' expr ')'
//   name    := letter (letter | digit | '_')*
//   number  := digits ['.' digits] [('e'|'E') ['+'|'-'] digits]
//
// '^' binds tighter than unary minus, so -x1^2 is -(x1^2); an exponent may
// itself start with a unary minus (x1^-2).

enum class ExprFunc { Sin, Cos, Exp, Log, Sqrt, Tanh };

struct ExprNode {
    enum class Kind { Literal, Variable, Add, Sub, Mul, Div, Pow, PowInt, Neg, Call };

    Kind kind;
    double literal = 0.0;            // Literal
    int var = -1;                    // Variable, 0-based
    long long ipow = 0;              // PowInt exponent
    ExprFunc fn = ExprFunc::Sin;     // Call
    std::unique_ptr<ExprNode> lhs;   // left child / unary child
    std::unique_ptr<ExprNode> rhs;   // right child
    std::size_t begin = 0, end = 0;  // source span [begin, end)
};

namespace detail {

inline bool node_equal(const ExprNode& a, const ExprNode& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case ExprNode::Kind::Literal:
            return a.literal == b.literal;
        case ExprNode::Kind::Variable:
            return a.var == b.var;
        case ExprNode::Kind::PowInt:
            return a.ipow == b.ipow && node_equal(*a.lhs, *b.lhs);
        case ExprNode::Kind::Neg:
            return node_equal(*a.lhs, *b.lhs);
        case ExprNode::Kind::Call:
            return a.fn == b.fn && node_equal(*a.lhs, *b.lhs);
        default:
            return node_equal(*a.lhs, *b.lhs) && node_equal(*a.rhs, *b.rhs);
    }
}

}  // namespace detail

// Immutable after parse; cheap to copy and safe to share across threads.
class Expression {
public:
    Expression() = default;
    Expression(std::shared_ptr<const ExprNode> root, int n, std::string source)
        : root_(std::move(root)), n_(n), source_(std::move(source)) {}

    const ExprNode& root() const { return *root_; }
    bool valid() const { return root_ != nullptr; }
    int dimension() const { return n_; }
    const std::string& source() const { return source_; }

    bool structurally_equal(const Expression& other) const {
        return n_ == other.n_ && detail::node_equal(*root_, *other.root_);
    }

private:
    std::shared_ptr<const ExprNode> root_;
    int n_ = 0;
    std::string source_;
};

// Point-local value, gradient and Hessian of a scalar expression. The
// Hessian is mirrored from one stored triangle and is therefore symmetric
// bit-for-bit.
struct Jet2 {
    double value = 0.0;
    Eigen::VectorXd grad;
    Eigen::MatrixXd hess;
};

namespace detail {

// ---------------- parser ----------------

class Parser {
public:
    Parser(std::string_view src, int n) : src_(src), n_(n) {}

    std::unique_ptr<ExprNode> run() {
        auto e = parse_expr();
        skip_ws();
        if (pos_ != src_.size())
            throw SyntaxError("unexpected character '" + std::string(1, src_[pos_]) + "'", pos_);
        return e;
    }

private:
    std::string_view src_;
    int n_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < src_.size() ? src_[pos_] : '\0';
    }

    static std::unique_ptr<ExprNode> make(ExprNode::Kind k, std::size_t b, std::size_t e) {
        auto n = std::make_unique<ExprNode>();
        n->kind = k;
        n->begin = b;
        n->end = e;
        return n;
    }

    std::unique_ptr<ExprNode> binary(ExprNode::Kind k, std::unique_ptr<ExprNode> l,
                                     std::unique_ptr<ExprNode> r) {
        auto n = make(k, l->begin, r->end);
        n->lhs = std::move(l);
        n->rhs = std::move(r);
        return n;
    }

    std::unique_ptr<ExprNode> parse_expr() {
        auto left = parse_term();
        for (;;) {
            if (eat('+'))
                left = binary(ExprNode::Kind::Add, std::move(left), parse_term());
            else if (eat('-'))
                left = binary(ExprNode::Kind::Sub, std::move(left), parse_term());
            else
                return left;
        }
    }

    std::unique_ptr<ExprNode> parse_term() {
        auto left = parse_unary();
        for (;;) {
            if (eat('*'))
                left = binary(ExprNode::Kind::Mul, std::move(left), parse_unary());
            else if (eat('/'))
                left = binary(ExprNode::Kind::Div, std::move(left), parse_unary());
            else
                return left;
        }
    }

    std::unique_ptr<ExprNode> parse_unary() {
        skip_ws();
        std::size_t b = pos_;
        if (eat('-')) {
            auto child = parse_unary();
            auto n = make(ExprNode::Kind::Neg, b, child->end);
            n->lhs = std::move(child);
            return n;
        }
        return parse_power();
    }

    std::unique_ptr<ExprNode> parse_power() {
        auto base = parse_atom();
        if (!eat('^')) return base;
        auto expo = parse_unary();

        // Fold literal integer exponents so they evaluate by repeated
        // multiplication instead of exp/log.
        const ExprNode* lit = expo.get();
        bool negated = false;
        if (lit->kind == ExprNode::Kind::Neg) {
            negated = true;
            lit = lit->lhs.get();
        }
        if (lit->kind == ExprNode::Kind::Literal && std::floor(lit->literal) == lit->literal &&
            std::abs(lit->literal) <= 1e9) {
            auto n = make(ExprNode::Kind::PowInt, base->begin, expo->end);
            n->ipow = static_cast<long long>(lit->literal) * (negated ? -1 : 1);
            n->lhs = std::move(base);
            return n;
        }
        return binary(ExprNode::Kind::Pow, std::move(base), std::move(expo));
    }

    std::unique_ptr<ExprNode> parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw SyntaxError("unexpected end of input", pos_);
        const char c = src_[pos_];

        if (c == '(') {
            ++pos_;
            auto inner = parse_expr();
            if (!eat(')')) throw SyntaxError("expected ')'", pos_);
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_name();
        throw SyntaxError("unexpected character '" + std::string(1, c) + "'", pos_);
    }

    std::unique_ptr<ExprNode> parse_number() {
        const std::size_t b = pos_;
        while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_++;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_])))
                    ++pos_;
            } else {
                pos_ = mark;  // 'e' was not an exponent; leave it to the caller
            }
        }
        const std::string text(src_.substr(b, pos_ - b));
        if (text == ".") throw SyntaxError("malformed number", b);
        auto n = make(ExprNode::Kind::Literal, b, pos_);
        n->literal = std::strtod(text.c_str(), nullptr);
        return n;
    }

    std::unique_ptr<ExprNode> parse_name() {
        const std::size_t b = pos_;
        while (pos_ < src_.size() && (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                                      src_[pos_] == '_'))
            ++pos_;
        const std::string name(src_.substr(b, pos_ - b));

        // variable xk
        if (name.size() >= 2 && name[0] == 'x' &&
            std::all_of(name.begin() + 1, name.end(),
                        [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); })) {
            errno = 0;
            const long long idx = std::strtoll(name.c_str() + 1, nullptr, 10);
            if (errno != 0 || idx < 1 || idx > n_) throw VariableOutOfRange(idx, n_, b);
            auto n = make(ExprNode::Kind::Variable, b, pos_);
            n->var = static_cast<int>(idx - 1);
            return n;
        }

        if (name == "pi") {
            auto n = make(ExprNode::Kind::Literal, b, pos_);
            n->literal = 3.14159265358979323846;
            return n;
        }
        if (name == "e") {
            auto n = make(ExprNode::Kind::Literal, b, pos_);
            n->literal = 2.71828182845904523536;
            return n;
        }

        ExprFunc fn;
        if (name == "sin")
            fn = ExprFunc::Sin;
        else if (name == "cos")
            fn = ExprFunc::Cos;
        else if (name == "exp")
            fn = ExprFunc::Exp;
        else if (name == "log")
            fn = ExprFunc::Log;
        else if (name == "sqrt")
            fn = ExprFunc::Sqrt;
        else if (name == "tanh")
            fn = ExprFunc::Tanh;
        else
            throw UnknownFunction(name, b);

        if (!eat('(')) throw SyntaxError("expected '(' after '" + name + "'", pos_);
        auto arg = parse_expr();
        if (!eat(')')) throw SyntaxError("expected ')'", pos_);
        auto n = make(ExprNode::Kind::Call, b, pos_);
        n->fn = fn;
        n->lhs = std::move(arg);
        return n;
    }
};

// ---------------- evaluation ----------------
//
// One templated walker for both the plain-double and the jet lane. The two
// lanes execute identical double operations on the value, so
// eval_value(e, x) == eval_jet2(e, x).value holds bit-exactly.

struct DoubleLane {
    using Scalar = double;
    const Eigen::VectorXd& x;
    Scalar literal(double v) const { return v; }
    Scalar variable(int k) const { return x[k]; }
    static double value_of(Scalar s) { return s; }
    static bool derivatives_all_zero(Scalar) { return true; }
    static Scalar sin(Scalar a) { return std::sin(a); }
    static Scalar cos(Scalar a) { return std::cos(a); }
    static Scalar exp(Scalar a) { return std::exp(a); }
    static Scalar log(Scalar a) { return std::log(a); }
    static Scalar sqrt(Scalar a) { return std::sqrt(a); }
    static Scalar tanh(Scalar a) { return std::tanh(a); }
    Scalar one() const { return 1.0; }
};

struct JetLane {
    using Scalar = Jet;
    const Eigen::VectorXd& x;
    Scalar literal(double v) const { return Jet::constant(static_cast<int>(x.size()), v); }
    Scalar variable(int k) const { return Jet::variable(static_cast<int>(x.size()), k, x[k]); }
    static double value_of(const Scalar& s) { return s.v; }
    static bool derivatives_all_zero(const Scalar& s) { return s.derivatives_all_zero(); }
    static Scalar sin(const Scalar& a) { return curvcheck::sin(a); }
    static Scalar cos(const Scalar& a) { return curvcheck::cos(a); }
    static Scalar exp(const Scalar& a) { return curvcheck::exp(a); }
    static Scalar log(const Scalar& a) { return curvcheck::log(a); }
    static Scalar sqrt(const Scalar& a) { return curvcheck::sqrt(a); }
    static Scalar tanh(const Scalar& a) { return curvcheck::tanh(a); }
    Scalar one() const { return Jet::constant(static_cast<int>(x.size()), 1.0); }
};

template <class Lane>
typename Lane::Scalar pow_integer(typename Lane::Scalar base, unsigned long long e,
                                  const Lane& lane) {
    auto result = lane.one();
    auto acc = base;
    while (e) {
        if (e & 1ULL) result = result * acc;
        e >>= 1;
        if (e) acc = acc * acc;
    }
    return result;
}

template <class Lane>
[[noreturn]] void domain_error(const char* what, const ExprNode& node, const std::string& src) {
    throw DomainError(what, src.substr(node.begin, node.end - node.begin), node.begin);
}

template <class Lane>
typename Lane::Scalar eval_node(const ExprNode& node, const Lane& lane, const std::string& src) {
    using K = ExprNode::Kind;
    switch (node.kind) {
        case K::Literal:
            return lane.literal(node.literal);
        case K::Variable:
            return lane.variable(node.var);
        case K::Add:
            return eval_node(*node.lhs, lane, src) + eval_node(*node.rhs, lane, src);
        case K::Sub:
            return eval_node(*node.lhs, lane, src) - eval_node(*node.rhs, lane, src);
        case K::Mul:
            return eval_node(*node.lhs, lane, src) * eval_node(*node.rhs, lane, src);
        case K::Div: {
            auto a = eval_node(*node.lhs, lane, src);
            auto b = eval_node(*node.rhs, lane, src);
            if (Lane::value_of(b) == 0.0) domain_error<Lane>("division by zero", node, src);
            return a / b;
        }
        case K::Neg:
            return -eval_node(*node.lhs, lane, src);
        case K::PowInt: {
            auto base = eval_node(*node.lhs, lane, src);
            const long long k = node.ipow;
            if (k < 0 && Lane::value_of(base) == 0.0)
                domain_error<Lane>("zero base with negative exponent", node, src);
            if (k >= 0) return pow_integer(base, static_cast<unsigned long long>(k), lane);
            return lane.one() /
                   pow_integer(base, static_cast<unsigned long long>(-k), lane);
        }
        case K::Pow: {
            auto base = eval_node(*node.lhs, lane, src);
            auto expo = eval_node(*node.rhs, lane, src);
            if (Lane::value_of(base) <= 0.0)
                domain_error<Lane>("non-integer power requires positive base", node, src);
            return Lane::exp(expo * Lane::log(base));
        }
        case K::Call: {
            auto a = eval_node(*node.lhs, lane, src);
            const double av = Lane::value_of(a);
            switch (node.fn) {
                case ExprFunc::Sin:
                    return Lane::sin(a);
                case ExprFunc::Cos:
                    return Lane::cos(a);
                case ExprFunc::Exp:
                    return Lane::exp(a);
                case ExprFunc::Log:
                    if (av <= 0.0) domain_error<Lane>("log of non-positive value", node, src);
                    return Lane::log(a);
                case ExprFunc::Sqrt:
                    if (av < 0.0) domain_error<Lane>("sqrt of negative value", node, src);
                    if (av == 0.0) {
                        if (!Lane::derivatives_all_zero(a))
                            domain_error<Lane>("sqrt not differentiable at zero", node, src);
                        return lane.literal(0.0);
                    }
                    return Lane::sqrt(a);
                case ExprFunc::Tanh:
                    return Lane::tanh(a);
            }
            domain_error<Lane>("unreachable", node, src);
        }
    }
    throw Error("corrupt expression tree");
}

// ---------------- printing ----------------

inline int node_precedence(const ExprNode& n) {
    switch (n.kind) {
        case ExprNode::Kind::Add:
        case ExprNode::Kind::Sub:
            return 1;
        case ExprNode::Kind::Mul:
        case ExprNode::Kind::Div:
            return 2;
        case ExprNode::Kind::Neg:
            return 3;
        case ExprNode::Kind::Pow:
        case ExprNode::Kind::PowInt:
            return 4;
        default:
            return 5;
    }
}

inline void print_node(const ExprNode& n, std::string& out);

inline void print_child(const ExprNode& child, int min_prec, std::string& out) {
    const bool parens = node_precedence(child) < min_prec;
    if (parens) out += '(';
    print_node(child, out);
    if (parens) out += ')';
}

inline void print_node(const ExprNode& n, std::string& out) {
    using K = ExprNode::Kind;
    switch (n.kind) {
        case K::Literal: {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", n.literal);
            out += buf;
            break;
        }
        case K::Variable:
            out += 'x';
            out += std::to_string(n.var + 1);
            break;
        case K::Add:
            print_child(*n.lhs, 1, out);
            out += " + ";
            print_child(*n.rhs, 2, out);
            break;
        case K::Sub:
            print_child(*n.lhs, 1, out);
            out += " - ";
            print_child(*n.rhs, 2, out);
            break;
        case K::Mul:
            print_child(*n.lhs, 2, out);
            out += "*";
            print_child(*n.rhs, 3, out);
            break;
        case K::Div:
            print_child(*n.lhs, 2, out);
            out += "/";
            print_child(*n.rhs, 3, out);
            break;
        case K::Neg:
            out += '-';
            print_child(*n.lhs, 3, out);
            break;
        case K::Pow:
            print_child(*n.lhs, 5, out);
            out += '^';
            print_child(*n.rhs, 3, out);
            break;
        case K::PowInt:
            print_child(*n.lhs, 5, out);
            out += '^';
            out += std::to_string(n.ipow);
            break;
        case K::Call:
            switch (n.fn) {
                case ExprFunc::Sin: out += "sin("; break;
                case ExprFunc::Cos: out += "cos("; break;
                case ExprFunc::Exp: out += "exp("; break;
                case ExprFunc::Log: out += "log("; break;
                case ExprFunc::Sqrt: out += "sqrt("; break;
                case ExprFunc::Tanh: out += "tanh("; break;
            }
            print_node(*n.lhs, out);
            out += ')';
            break;
    }
}

}  // namespace detail

inline Expression parse(std::string_view source, int n) {
    if (source.empty()) throw SyntaxError("empty expression", 0);
    if (n < 0) throw DimensionMismatch("negative dimension");
    detail::Parser p(source, n);
    std::shared_ptr<const ExprNode> root{p.run().release()};
    return Expression(std::move(root), n, std::string(source));
}

inline double eval_value(const Expression& e, const Eigen::VectorXd& x) {
    if (x.size() != e.dimension())
        throw DimensionMismatch("point dimension does not match expression dimension");
    detail::DoubleLane lane{x};
    const double v = detail::eval_node(e.root(), lane, e.source());
    if (!std::isfinite(v))
        throw DomainError("non-finite result", e.source(), 0);
    return v;
}

inline Jet2 eval_jet2(const Expression& e, const Eigen::VectorXd& x) {
    if (x.size() != e.dimension())
        throw DimensionMismatch("point dimension does not match expression dimension");
    detail::JetLane lane{x};
    const Jet j = detail::eval_node(e.root(), lane, e.source());
    if (!j.all_finite())
        throw DomainError("non-finite result", e.source(), 0);
    Jet2 out;
    out.value = j.v;
    out.grad = j.g;
    out.hess = j.hessian();
    return out;
}

// Round-trips: parse(to_string(e), n) is structurally identical to e.
inline std::string to_string(const Expression& e) {
    std::string out;
    detail::print_node(e.root(), out);
    return out;
}

}  // namespace curvcheck
