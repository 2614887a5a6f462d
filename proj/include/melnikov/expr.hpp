#ifndef MELNIKOV_EXPR_HPP
#define MELNIKOV_EXPR_HPP

// Scalar expression trees over named variables: parsing, exact symbolic
// differentiation and double-precision evaluation. Hamiltonians and
// conserved quantities are held in this form; derivative trees are built
// once and then evaluated millions of times along trajectories, so the
// representation is a flat node arena with index links.
//
// Grammar (documented in docs/formats.md):
//
//   expression := term { ('+'|'-') term }
//   term       := unary { ('*'|'/') unary }
//   unary      := '-' unary | power
//   power      := primary [ '^' unary ]          (right-associative)
//   primary    := NUMBER | IDENT | IDENT '(' expression ')' | '(' expression ')'
//
// '^' requires a constant exponent (it must fold to a number at parse
// time). `pi` is a built-in constant. Function identifiers: sin cos tan
// exp ln sqrt sinh cosh tanh sech arctan.

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "errors.hpp"

namespace melnikov {

enum class UnaryOp { Neg, Sin, Cos, Tan, Exp, Ln, Sqrt, Sinh, Cosh, Tanh, Sech, Arctan };
enum class BinaryOp { Add, Sub, Mul, Div, Pow };

struct ExprNode {
    enum class Kind { Constant, Variable, Unary, Binary };
    Kind kind = Kind::Constant;
    double value = 0.0; // Constant
    int var = -1;       // Variable: index into the declared-variable list
    UnaryOp uop = UnaryOp::Neg;
    BinaryOp bop = BinaryOp::Add;
    int a = -1, b = -1; // children
};

class Expression {
public:
    Expression() = default;

    static Expression parse(std::string_view source, std::vector<std::string> variables);

    static Expression constant(double v, std::vector<std::string> variables) {
        Expression e(std::move(variables));
        e.root_ = e.push_constant(v);
        return e;
    }

    static Expression variable(std::string_view name, std::vector<std::string> variables) {
        Expression e(std::move(variables));
        int idx = e.var_index(name);
        if (idx < 0) throw ConfigError("variable '" + std::string(name) + "' not in declared list");
        ExprNode n;
        n.kind = ExprNode::Kind::Variable;
        n.var = idx;
        e.nodes_.push_back(n);
        e.root_ = int(e.nodes_.size()) - 1;
        return e;
    }

    bool empty() const { return root_ < 0; }
    const std::vector<std::string>& variables() const { return vars_; }

    int var_index(std::string_view name) const {
        for (std::size_t i = 0; i < vars_.size(); ++i)
            if (vars_[i] == name) return int(i);
        return -1;
    }

    // Fast path: `values[i]` binds `variables()[i]`. The span must cover the
    // whole declared list.
    double evaluate(std::span<const double> values) const {
        if (values.size() < vars_.size())
            throw DomainError("binding vector shorter than declared variable list");
        return eval_node(root_, values);
    }

    // Name-keyed convenience path; every free variable must be bound.
    double evaluate(const std::map<std::string, double>& bindings) const {
        std::vector<double> values(vars_.size(), 0.0);
        for (std::size_t i = 0; i < vars_.size(); ++i) {
            auto it = bindings.find(vars_[i]);
            if (it == bindings.end()) {
                if (depends_on(int(i)))
                    throw DomainError("missing binding for variable '" + vars_[i] + "'");
                continue;
            }
            values[i] = it->second;
        }
        return evaluate(values);
    }

    bool depends_on(int var) const { return depends_on_node(root_, var); }
    bool depends_on(std::string_view name) const {
        int idx = var_index(name);
        return idx >= 0 && depends_on(idx);
    }

    Expression differentiate(int var) const {
        if (var < 0 || var >= int(vars_.size()))
            throw ConfigError("differentiate: variable index out of range");
        Expression out(vars_);
        out.nodes_ = nodes_; // derivative reuses the original subtrees
        out.root_ = out.diff_node(root_, var);
        return out;
    }

    Expression differentiate(std::string_view name) const {
        int idx = var_index(name);
        if (idx < 0) throw ConfigError("differentiate: unknown variable '" + std::string(name) + "'");
        return differentiate(idx);
    }

    // Rebuilds the tree over a new declared list (a superset by name).
    Expression rebind(std::vector<std::string> new_variables) const {
        Expression out(std::move(new_variables));
        out.nodes_ = nodes_;
        out.root_ = root_;
        for (auto& n : out.nodes_) {
            if (n.kind != ExprNode::Kind::Variable) continue;
            int idx = out.var_index(vars_[std::size_t(n.var)]);
            if (idx < 0)
                throw ConfigError("rebind: variable '" + vars_[std::size_t(n.var)] +
                                  "' missing from new declaration");
            n.var = idx;
        }
        return out;
    }

    std::string to_string() const {
        std::string out;
        print_node(root_, 0, out);
        return out;
    }

    bool is_constant() const { return nodes_[std::size_t(root_)].kind == ExprNode::Kind::Constant; }
    double constant_value() const { return nodes_[std::size_t(root_)].value; }

    friend Expression operator+(const Expression& x, const Expression& y) { return combine(BinaryOp::Add, x, y); }
    friend Expression operator-(const Expression& x, const Expression& y) { return combine(BinaryOp::Sub, x, y); }
    friend Expression operator*(const Expression& x, const Expression& y) { return combine(BinaryOp::Mul, x, y); }
    friend Expression operator*(double a, const Expression& y) {
        return combine(BinaryOp::Mul, Expression::constant(a, y.vars_), y);
    }

private:
    explicit Expression(std::vector<std::string> vars) : vars_(std::move(vars)) {}

    std::vector<ExprNode> nodes_;
    int root_ = -1;
    std::vector<std::string> vars_;

    int push_constant(double v) {
        ExprNode n;
        n.kind = ExprNode::Kind::Constant;
        n.value = v;
        nodes_.push_back(n);
        return int(nodes_.size()) - 1;
    }

    int push_unary(UnaryOp op, int a) {
        const ExprNode& ca = nodes_[std::size_t(a)];
        if (ca.kind == ExprNode::Kind::Constant)
            return push_constant(apply_unary(op, ca.value));
        ExprNode n;
        n.kind = ExprNode::Kind::Unary;
        n.uop = op;
        n.a = a;
        nodes_.push_back(n);
        return int(nodes_.size()) - 1;
    }

    bool is_const(int i, double v) const {
        const ExprNode& n = nodes_[std::size_t(i)];
        return n.kind == ExprNode::Kind::Constant && n.value == v;
    }

    // Binary constructor with constant folding (0*x -> 0, x+0 -> x, 1*x -> x,
    // x^1 -> x, ...). No deeper simplification: correctness over canonical form.
    int push_binary(BinaryOp op, int a, int b) {
        const ExprNode& ca = nodes_[std::size_t(a)];
        const ExprNode& cb = nodes_[std::size_t(b)];
        const bool const_a = ca.kind == ExprNode::Kind::Constant;
        const bool const_b = cb.kind == ExprNode::Kind::Constant;
        if (const_a && const_b) return push_constant(apply_binary(op, ca.value, cb.value));
        switch (op) {
        case BinaryOp::Add:
            if (is_const(a, 0.0)) return b;
            if (is_const(b, 0.0)) return a;
            break;
        case BinaryOp::Sub:
            if (is_const(b, 0.0)) return a;
            if (is_const(a, 0.0)) return push_unary(UnaryOp::Neg, b);
            break;
        case BinaryOp::Mul:
            if (is_const(a, 0.0) || is_const(b, 0.0)) return push_constant(0.0);
            if (is_const(a, 1.0)) return b;
            if (is_const(b, 1.0)) return a;
            break;
        case BinaryOp::Div:
            if (is_const(a, 0.0)) return push_constant(0.0);
            if (is_const(b, 1.0)) return a;
            break;
        case BinaryOp::Pow:
            if (is_const(b, 1.0)) return a;
            if (is_const(b, 0.0)) return push_constant(1.0);
            break;
        }
        ExprNode n;
        n.kind = ExprNode::Kind::Binary;
        n.bop = op;
        n.a = a;
        n.b = b;
        nodes_.push_back(n);
        return int(nodes_.size()) - 1;
    }

    static double apply_unary(UnaryOp op, double x) {
        switch (op) {
        case UnaryOp::Neg: return -x;
        case UnaryOp::Sin: return std::sin(x);
        case UnaryOp::Cos: return std::cos(x);
        case UnaryOp::Tan: return std::tan(x);
        case UnaryOp::Exp: return std::exp(x);
        case UnaryOp::Ln:
            if (x <= 0.0) throw DomainError("ln of nonpositive value");
            return std::log(x);
        case UnaryOp::Sqrt:
            if (x < 0.0) throw DomainError("sqrt of negative value");
            return std::sqrt(x);
        case UnaryOp::Sinh: return std::sinh(x);
        case UnaryOp::Cosh: return std::cosh(x);
        case UnaryOp::Tanh: return std::tanh(x);
        case UnaryOp::Sech: return 1.0 / std::cosh(x);
        case UnaryOp::Arctan: return std::atan(x);
        }
        return 0.0;
    }

    static double apply_binary(BinaryOp op, double x, double y) {
        switch (op) {
        case BinaryOp::Add: return x + y;
        case BinaryOp::Sub: return x - y;
        case BinaryOp::Mul: return x * y;
        case BinaryOp::Div:
            if (y == 0.0) throw DomainError("division by zero");
            return x / y;
        case BinaryOp::Pow: {
            if (x == 0.0 && y < 0.0) throw DomainError("zero raised to a negative power");
            if (x < 0.0 && y != std::floor(y)) throw DomainError("fractional power of a negative base");
            return std::pow(x, y);
        }
        }
        return 0.0;
    }

    double eval_node(int i, std::span<const double> values) const {
        const ExprNode& n = nodes_[std::size_t(i)];
        switch (n.kind) {
        case ExprNode::Kind::Constant: return n.value;
        case ExprNode::Kind::Variable: return values[std::size_t(n.var)];
        case ExprNode::Kind::Unary: return apply_unary(n.uop, eval_node(n.a, values));
        case ExprNode::Kind::Binary:
            return apply_binary(n.bop, eval_node(n.a, values), eval_node(n.b, values));
        }
        return 0.0;
    }

    bool depends_on_node(int i, int var) const {
        if (i < 0) return false;
        const ExprNode& n = nodes_[std::size_t(i)];
        switch (n.kind) {
        case ExprNode::Kind::Constant: return false;
        case ExprNode::Kind::Variable: return n.var == var;
        case ExprNode::Kind::Unary: return depends_on_node(n.a, var);
        case ExprNode::Kind::Binary: return depends_on_node(n.a, var) || depends_on_node(n.b, var);
        }
        return false;
    }

    int diff_node(int i, int var) {
        const ExprNode n = nodes_[std::size_t(i)]; // copy: nodes_ may reallocate
        switch (n.kind) {
        case ExprNode::Kind::Constant: return push_constant(0.0);
        case ExprNode::Kind::Variable: return push_constant(n.var == var ? 1.0 : 0.0);
        case ExprNode::Kind::Unary: {
            int da = diff_node(n.a, var);
            return push_binary(BinaryOp::Mul, unary_chain(n.uop, n.a), da);
        }
        case ExprNode::Kind::Binary: {
            switch (n.bop) {
            case BinaryOp::Add: return push_binary(BinaryOp::Add, diff_node(n.a, var), diff_node(n.b, var));
            case BinaryOp::Sub: return push_binary(BinaryOp::Sub, diff_node(n.a, var), diff_node(n.b, var));
            case BinaryOp::Mul: {
                int t1 = push_binary(BinaryOp::Mul, diff_node(n.a, var), n.b);
                int t2 = push_binary(BinaryOp::Mul, n.a, diff_node(n.b, var));
                return push_binary(BinaryOp::Add, t1, t2);
            }
            case BinaryOp::Div: {
                int t1 = push_binary(BinaryOp::Mul, diff_node(n.a, var), n.b);
                int t2 = push_binary(BinaryOp::Mul, n.a, diff_node(n.b, var));
                int num = push_binary(BinaryOp::Sub, t1, t2);
                int den = push_binary(BinaryOp::Mul, n.b, n.b);
                return push_binary(BinaryOp::Div, num, den);
            }
            case BinaryOp::Pow: {
                // Exponent is constant by construction: d(u^c) = c u^(c-1) u'.
                double c = nodes_[std::size_t(n.b)].value;
                int pw = push_binary(BinaryOp::Pow, n.a, push_constant(c - 1.0));
                int t = push_binary(BinaryOp::Mul, push_constant(c), pw);
                return push_binary(BinaryOp::Mul, t, diff_node(n.a, var));
            }
            }
            return -1;
        }
        }
        return -1;
    }

    // d f(u) / du for each primitive.
    int unary_chain(UnaryOp op, int u) {
        switch (op) {
        case UnaryOp::Neg: return push_constant(-1.0);
        case UnaryOp::Sin: return push_unary(UnaryOp::Cos, u);
        case UnaryOp::Cos: return push_unary(UnaryOp::Neg, push_unary(UnaryOp::Sin, u));
        case UnaryOp::Tan: {
            int c = push_unary(UnaryOp::Cos, u);
            return push_binary(BinaryOp::Div, push_constant(1.0), push_binary(BinaryOp::Mul, c, c));
        }
        case UnaryOp::Exp: return push_unary(UnaryOp::Exp, u);
        case UnaryOp::Ln: return push_binary(BinaryOp::Div, push_constant(1.0), u);
        case UnaryOp::Sqrt: {
            int s = push_unary(UnaryOp::Sqrt, u);
            return push_binary(BinaryOp::Div, push_constant(0.5), s);
        }
        case UnaryOp::Sinh: return push_unary(UnaryOp::Cosh, u);
        case UnaryOp::Cosh: return push_unary(UnaryOp::Sinh, u);
        case UnaryOp::Tanh: {
            int s = push_unary(UnaryOp::Sech, u);
            return push_binary(BinaryOp::Mul, s, s);
        }
        case UnaryOp::Sech: {
            int s = push_unary(UnaryOp::Sech, u);
            int t = push_unary(UnaryOp::Tanh, u);
            return push_unary(UnaryOp::Neg, push_binary(BinaryOp::Mul, s, t));
        }
        case UnaryOp::Arctan: {
            int sq = push_binary(BinaryOp::Mul, u, u);
            int den = push_binary(BinaryOp::Add, push_constant(1.0), sq);
            return push_binary(BinaryOp::Div, push_constant(1.0), den);
        }
        }
        return -1;
    }

    static const char* unary_name(UnaryOp op) {
        switch (op) {
        case UnaryOp::Neg: return "-";
        case UnaryOp::Sin: return "sin";
        case UnaryOp::Cos: return "cos";
        case UnaryOp::Tan: return "tan";
        case UnaryOp::Exp: return "exp";
        case UnaryOp::Ln: return "ln";
        case UnaryOp::Sqrt: return "sqrt";
        case UnaryOp::Sinh: return "sinh";
        case UnaryOp::Cosh: return "cosh";
        case UnaryOp::Tanh: return "tanh";
        case UnaryOp::Sech: return "sech";
        case UnaryOp::Arctan: return "arctan";
        }
        return "?";
    }

    // Precedence levels: + - (1), * / (2), unary - (3), ^ (4), atoms (5).
    void print_node(int i, int parent_prec, std::string& out) const {
        const ExprNode& n = nodes_[std::size_t(i)];
        switch (n.kind) {
        case ExprNode::Kind::Constant: {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", n.value);
            bool paren = n.value < 0.0 && parent_prec > 0;
            if (paren) out.push_back('(');
            out += buf;
            if (paren) out.push_back(')');
            return;
        }
        case ExprNode::Kind::Variable:
            out += vars_[std::size_t(n.var)];
            return;
        case ExprNode::Kind::Unary: {
            if (n.uop == UnaryOp::Neg) {
                bool paren = parent_prec > 3;
                if (paren) out.push_back('(');
                out.push_back('-');
                print_node(n.a, 3, out);
                if (paren) out.push_back(')');
            } else {
                out += unary_name(n.uop);
                out.push_back('(');
                print_node(n.a, 0, out);
                out.push_back(')');
            }
            return;
        }
        case ExprNode::Kind::Binary: {
            int prec = 0;
            const char* sym = "";
            switch (n.bop) {
            case BinaryOp::Add: prec = 1; sym = " + "; break;
            case BinaryOp::Sub: prec = 1; sym = " - "; break;
            case BinaryOp::Mul: prec = 2; sym = "*"; break;
            case BinaryOp::Div: prec = 2; sym = "/"; break;
            case BinaryOp::Pow: prec = 4; sym = "^"; break;
            }
            bool paren = prec < parent_prec;
            if (paren) out.push_back('(');
            // Right operands always get strictly higher precedence so the
            // printed form reparses with the exact original grouping
            // (floating-point arithmetic is order-sensitive).
            print_node(n.a, n.bop == BinaryOp::Pow ? 5 : prec, out);
            out += sym;
            print_node(n.b, prec + 1, out);
            if (paren) out.push_back(')');
            return;
        }
        }
    }

    static Expression combine(BinaryOp op, const Expression& x, const Expression& y) {
        if (x.vars_ != y.vars_)
            throw ConfigError("cannot combine expressions over different variable lists");
        Expression out(x.vars_);
        out.nodes_ = x.nodes_;
        int ra = x.root_;
        int offset = int(out.nodes_.size());
        for (ExprNode n : y.nodes_) {
            if (n.kind == ExprNode::Kind::Unary) n.a += offset;
            if (n.kind == ExprNode::Kind::Binary) { n.a += offset; n.b += offset; }
            out.nodes_.push_back(n);
        }
        out.root_ = out.push_binary(op, ra, y.root_ + offset);
        return out;
    }

    friend class ExprParser;
};

class ExprParser {
public:
    ExprParser(std::string_view src, std::vector<std::string> vars)
        : src_(src), expr_(std::move(vars)) {}

    Expression run() {
        if (src_.empty()) throw ParseError("empty expression", 0);
        expr_.root_ = parse_expression();
        skip_ws();
        if (pos_ != src_.size()) throw ParseError("unexpected trailing input", pos_);
        return std::move(expr_);
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
    Expression expr_;

    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t')) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < src_.size() && src_[pos_] == c) { ++pos_; return true; }
        return false;
    }

    int parse_expression() {
        int lhs = parse_term();
        for (;;) {
            skip_ws();
            if (eat('+')) lhs = expr_.push_binary(BinaryOp::Add, lhs, parse_term());
            else if (eat('-')) lhs = expr_.push_binary(BinaryOp::Sub, lhs, parse_term());
            else return lhs;
        }
    }

    int parse_term() {
        int lhs = parse_unary();
        for (;;) {
            skip_ws();
            if (eat('*')) lhs = expr_.push_binary(BinaryOp::Mul, lhs, parse_unary());
            else if (eat('/')) lhs = expr_.push_binary(BinaryOp::Div, lhs, parse_unary());
            else return lhs;
        }
    }

    int parse_unary() {
        skip_ws();
        if (eat('-')) return expr_.push_unary(UnaryOp::Neg, parse_unary());
        return parse_power();
    }

    int parse_power() {
        int base = parse_primary();
        skip_ws();
        std::size_t caret = pos_;
        if (!eat('^')) return base;
        int exp = parse_unary(); // right-associative; allows p^-2, p^(3/2)
        if (expr_.nodes_[std::size_t(exp)].kind != ExprNode::Kind::Constant)
            throw ParseError("exponent must be a constant", caret);
        return expr_.push_binary(BinaryOp::Pow, base, exp);
    }

    int parse_primary() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
        char c = src_[pos_];
        if (eat('(')) {
            int inner = parse_expression();
            if (!eat(')')) throw ParseError("expected ')'", pos_);
            return inner;
        }
        if ((c >= '0' && c <= '9') || c == '.') return parse_number();
        if (is_ident_start(c)) return parse_identifier();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    static bool is_ident_start(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_';
    }
    static bool is_ident_char(char c) {
        return is_ident_start(c) || (c >= '0' && c <= '9');
    }

    int parse_number() {
        const char* first = src_.data() + pos_;
        const char* last = src_.data() + src_.size();
        double value = 0.0;
        auto [ptr, ec] = std::from_chars(first, last, value);
        if (ec != std::errc())
            throw ParseError("malformed number", pos_);
        pos_ = std::size_t(ptr - src_.data());
        return expr_.push_constant(value);
    }

    int parse_identifier() {
        std::size_t start = pos_;
        while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
        std::string_view name = src_.substr(start, pos_ - start);

        static const std::array<std::pair<std::string_view, UnaryOp>, 11> functions = {{
            {"sin", UnaryOp::Sin}, {"cos", UnaryOp::Cos}, {"tan", UnaryOp::Tan},
            {"exp", UnaryOp::Exp}, {"ln", UnaryOp::Ln}, {"sqrt", UnaryOp::Sqrt},
            {"sinh", UnaryOp::Sinh}, {"cosh", UnaryOp::Cosh}, {"tanh", UnaryOp::Tanh},
            {"sech", UnaryOp::Sech}, {"arctan", UnaryOp::Arctan},
        }};
        for (const auto& [fname, op] : functions) {
            if (name == fname) {
                if (!eat('(')) throw ParseError("expected '(' after function name", pos_);
                int arg = parse_expression();
                if (!eat(')')) throw ParseError("expected ')'", pos_);
                return expr_.push_unary(op, arg);
            }
        }
        if (name == "pi") return expr_.push_constant(3.14159265358979323846);

        int idx = expr_.var_index(name);
        if (idx < 0) throw UndeclaredIdentifierError(std::string(name), start);
        ExprNode n;
        n.kind = ExprNode::Kind::Variable;
        n.var = idx;
        expr_.nodes_.push_back(n);
        return int(expr_.nodes_.size()) - 1;
    }
};

inline Expression Expression::parse(std::string_view source, std::vector<std::string> variables) {
    for (std::size_t i = 0; i < variables.size(); ++i)
        for (std::size_t j = i + 1; j < variables.size(); ++j)
            if (variables[i] == variables[j])
                throw ConfigError("duplicate declared variable '" + variables[i] + "'");
    return ExprParser(source, std::move(variables)).run();
}

} // namespace melnikov

#endif
