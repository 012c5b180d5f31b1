#pragma once

// Reverse-mode automatic differentiation on a flat operation tape.
//
// A Var behaves like a double; arithmetic on Vars appends primitive nodes to
// a Tape. Vars not bound to a tape act as constants and fold eagerly, so
// generic numeric code can mix literals, accumulators, and tracked values
// without special cases. Every node stores its opcode and operands, which
// makes the tape replayable: re-evaluating the node list reproduces the
// recorded forward pass bit for bit.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace diffsim::ad {

enum class Op : std::uint8_t {
    Const,   // leaf, fixed value
    Input,   // leaf, differentiation input
    Add,     // a + b
    Sub,     // a - b
    Mul,     // a * b
    Div,     // a / b
    AddC,    // a + aux
    MulC,    // a * aux
    CSub,    // aux - a
    CDiv,    // aux / a
    DivC,    // a / aux
    Neg,     // -a
    Sqrt,    // sqrt(a)
    Max0,    // max(a, 0); subgradient 0 at a == 0
};

struct Node {
    std::int32_t a = -1;
    std::int32_t b = -1;
    double value = 0.0;
    double aux = 0.0;
    Op op = Op::Const;
};

class Tape;

struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;
    double v = 0.0;

    Var() = default;
    Var(double value) : v(value) {}  // off-tape constant
    Var(Tape* t, std::int32_t i, double value) : tape(t), id(i), v(value) {}

    double val() const { return v; }
    bool tracked() const { return tape != nullptr && id >= 0; }
};

class Tape {
  public:
    Var input(double value) {
        push(Node{-1, -1, value, 0.0, Op::Input});
        return Var{this, last_id(), value};
    }

    Var track(double value) {
        push(Node{-1, -1, value, 0.0, Op::Const});
        return Var{this, last_id(), value};
    }

    std::int32_t emit(Op op, std::int32_t a, std::int32_t b, double value, double aux) {
        push(Node{a, b, value, aux, op});
        return last_id();
    }

    size_t size() const { return nodes_.size(); }
    const Node& node(std::int32_t id) const { return nodes_[static_cast<size_t>(id)]; }
    double value(std::int32_t id) const { return nodes_[static_cast<size_t>(id)].value; }

    void clear() { nodes_.clear(); }
    void reserve(size_t n) { nodes_.reserve(n); }

    // Forward re-evaluation of the recorded program. Returns the recomputed
    // value of every node; leaves keep their stored values.
    std::vector<double> replay() const {
        std::vector<double> out(nodes_.size());
        for (size_t i = 0; i < nodes_.size(); ++i) {
            const Node& n = nodes_[i];
            const double va = n.a >= 0 ? out[static_cast<size_t>(n.a)] : 0.0;
            const double vb = n.b >= 0 ? out[static_cast<size_t>(n.b)] : 0.0;
            switch (n.op) {
                case Op::Const:
                case Op::Input: out[i] = n.value; break;
                case Op::Add:  out[i] = va + vb; break;
                case Op::Sub:  out[i] = va - vb; break;
                case Op::Mul:  out[i] = va * vb; break;
                case Op::Div:  out[i] = va / vb; break;
                case Op::AddC: out[i] = va + n.aux; break;
                case Op::MulC: out[i] = va * n.aux; break;
                case Op::CSub: out[i] = n.aux - va; break;
                case Op::CDiv: out[i] = n.aux / va; break;
                case Op::DivC: out[i] = va / n.aux; break;
                case Op::Neg:  out[i] = -va; break;
                case Op::Sqrt: out[i] = std::sqrt(va); break;
                case Op::Max0: out[i] = va > 0.0 ? va : 0.0; break;
            }
        }
        return out;
    }

    // Reverse sweep from the given output node; returns d(output)/d(node)
    // for every node on the tape.
    std::vector<double> gradient(std::int32_t output) const {
        if (output < 0 || static_cast<size_t>(output) >= nodes_.size())
            throw std::invalid_argument("gradient: output node not on tape");
        std::vector<double> adj(nodes_.size(), 0.0);
        adj[static_cast<size_t>(output)] = 1.0;
        for (std::int32_t i = static_cast<std::int32_t>(nodes_.size()) - 1; i >= 0; --i) {
            const double g = adj[static_cast<size_t>(i)];
            if (g == 0.0) continue;
            const Node& n = nodes_[static_cast<size_t>(i)];
            switch (n.op) {
                case Op::Const:
                case Op::Input: break;
                case Op::Add:
                    adj[static_cast<size_t>(n.a)] += g;
                    adj[static_cast<size_t>(n.b)] += g;
                    break;
                case Op::Sub:
                    adj[static_cast<size_t>(n.a)] += g;
                    adj[static_cast<size_t>(n.b)] -= g;
                    break;
                case Op::Mul:
                    adj[static_cast<size_t>(n.a)] += g * nodes_[static_cast<size_t>(n.b)].value;
                    adj[static_cast<size_t>(n.b)] += g * nodes_[static_cast<size_t>(n.a)].value;
                    break;
                case Op::Div: {
                    const double vb = nodes_[static_cast<size_t>(n.b)].value;
                    adj[static_cast<size_t>(n.a)] += g / vb;
                    adj[static_cast<size_t>(n.b)] -= g * n.value / vb;
                    break;
                }
                case Op::AddC: adj[static_cast<size_t>(n.a)] += g; break;
                case Op::MulC: adj[static_cast<size_t>(n.a)] += g * n.aux; break;
                case Op::CSub: adj[static_cast<size_t>(n.a)] -= g; break;
                case Op::CDiv: {
                    const double va = nodes_[static_cast<size_t>(n.a)].value;
                    adj[static_cast<size_t>(n.a)] -= g * n.value / va;
                    break;
                }
                case Op::DivC: adj[static_cast<size_t>(n.a)] += g / n.aux; break;
                case Op::Neg:  adj[static_cast<size_t>(n.a)] -= g; break;
                case Op::Sqrt:
                    adj[static_cast<size_t>(n.a)] += g * 0.5 / n.value;
                    break;
                case Op::Max0:
                    if (nodes_[static_cast<size_t>(n.a)].value > 0.0)
                        adj[static_cast<size_t>(n.a)] += g;
                    break;
            }
        }
        return adj;
    }

  private:
    void push(const Node& n) {
        nodes_.push_back(n);
        if (nodes_.size() > static_cast<size_t>(INT32_MAX))
            throw std::length_error("tape overflow");
    }
    std::int32_t last_id() const { return static_cast<std::int32_t>(nodes_.size()) - 1; }

    std::vector<Node> nodes_;
};

namespace detail {
inline Tape* tape_of(const Var& a, const Var& b) {
    if (a.tracked()) {
        if (b.tracked() && b.tape != a.tape)
            throw std::invalid_argument("vars from different tapes");
        return a.tape;
    }
    return b.tracked() ? b.tape : nullptr;
}
}  // namespace detail

inline Var operator+(const Var& a, const Var& b) {
    const double v = a.v + b.v;
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var{v};
    if (a.tracked() && b.tracked()) return Var{t, t->emit(Op::Add, a.id, b.id, v, 0.0), v};
    if (a.tracked()) return Var{t, t->emit(Op::AddC, a.id, -1, v, b.v), v};
    return Var{t, t->emit(Op::AddC, b.id, -1, v, a.v), v};
}

inline Var operator-(const Var& a, const Var& b) {
    const double v = a.v - b.v;
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var{v};
    if (a.tracked() && b.tracked()) return Var{t, t->emit(Op::Sub, a.id, b.id, v, 0.0), v};
    if (a.tracked()) return Var{t, t->emit(Op::AddC, a.id, -1, v, -b.v), v};
    return Var{t, t->emit(Op::CSub, b.id, -1, v, a.v), v};
}

inline Var operator*(const Var& a, const Var& b) {
    const double v = a.v * b.v;
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var{v};
    if (a.tracked() && b.tracked()) return Var{t, t->emit(Op::Mul, a.id, b.id, v, 0.0), v};
    if (a.tracked()) return Var{t, t->emit(Op::MulC, a.id, -1, v, b.v), v};
    return Var{t, t->emit(Op::MulC, b.id, -1, v, a.v), v};
}

inline Var operator/(const Var& a, const Var& b) {
    const double v = a.v / b.v;
    Tape* t = detail::tape_of(a, b);
    if (!t) return Var{v};
    if (a.tracked() && b.tracked()) return Var{t, t->emit(Op::Div, a.id, b.id, v, 0.0), v};
    if (a.tracked()) return Var{t, t->emit(Op::DivC, a.id, -1, v, b.v), v};
    return Var{t, t->emit(Op::CDiv, b.id, -1, v, a.v), v};
}

inline Var operator-(const Var& a) {
    if (!a.tracked()) return Var{-a.v};
    return Var{a.tape, a.tape->emit(Op::Neg, a.id, -1, -a.v, 0.0), -a.v};
}

inline Var operator+(const Var& a, double b) { return a + Var{b}; }
inline Var operator+(double a, const Var& b) { return Var{a} + b; }
inline Var operator-(const Var& a, double b) { return a - Var{b}; }
inline Var operator-(double a, const Var& b) { return Var{a} - b; }
inline Var operator*(const Var& a, double b) { return a * Var{b}; }
inline Var operator*(double a, const Var& b) { return Var{a} * b; }
inline Var operator/(const Var& a, double b) { return a / Var{b}; }
inline Var operator/(double a, const Var& b) { return Var{a} / b; }

inline Var& operator+=(Var& a, const Var& b) { a = a + b; return a; }
inline Var& operator-=(Var& a, const Var& b) { a = a - b; return a; }
inline Var& operator*=(Var& a, const Var& b) { a = a * b; return a; }

inline Var sqrt(const Var& a) {
    const double v = std::sqrt(a.v);
    if (!a.tracked()) return Var{v};
    return Var{a.tape, a.tape->emit(Op::Sqrt, a.id, -1, v, 0.0), v};
}

inline Var relu(const Var& a) {
    const double v = a.v > 0.0 ? a.v : 0.0;
    if (!a.tracked()) return Var{v};
    return Var{a.tape, a.tape->emit(Op::Max0, a.id, -1, v, 0.0), v};
}

inline bool operator<(const Var& a, const Var& b) { return a.v < b.v; }
inline bool operator>(const Var& a, const Var& b) { return a.v > b.v; }
inline bool operator<(const Var& a, double b) { return a.v < b; }
inline bool operator>(const Var& a, double b) { return a.v > b; }
inline bool operator<(double a, const Var& b) { return a < b.v; }
inline bool operator>(double a, const Var& b) { return a > b.v; }

}  // namespace diffsim::ad

namespace diffsim {
// double counterpart so scalar-generic code can call relu() uniformly.
inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double value_of(double x) { return x; }
inline double value_of(const ad::Var& x) { return x.val(); }
}  // namespace diffsim
