#pragma once

#include <array>
#include <bit>
#include <cassert>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "qem/pauli.hpp"
#include "qem/rng.hpp"

namespace qem {

using cdouble = std::complex<double>;

inline constexpr int kMaxQubits = 20; // dense amplitudes; 2^20 entries

// Pure state of N qubits as 2^N complex amplitudes over the computational
// basis.  Qubit 1 is the least-significant bit of the basis index.
class StateVector {
  public:
    explicit StateVector(int n_qubits) : n_qubits_(check_size(n_qubits)), amps_(dim(), cdouble{0.0, 0.0}) {
        amps_[0] = cdouble{1.0, 0.0};
    }

    static StateVector basis(int n_qubits, std::uint64_t index) {
        StateVector s(n_qubits);
        if (index >= s.dim()) throw std::out_of_range("basis index out of range");
        s.amps_[0] = cdouble{0.0, 0.0};
        s.amps_[index] = cdouble{1.0, 0.0};
        return s;
    }

    // Amplitudes must already be normalized to 1e-12.
    static StateVector from_amplitudes(int n_qubits, std::vector<cdouble> amps) {
        StateVector s(n_qubits);
        if (amps.size() != s.dim()) throw std::invalid_argument("amplitude count != 2^N");
        s.amps_ = std::move(amps);
        if (std::abs(s.norm() - 1.0) > 1e-12) throw std::invalid_argument("state not normalized");
        return s;
    }

    // Haar-random state (normalized complex Gaussian amplitudes).
    static StateVector random(int n_qubits, Rng& rng) {
        StateVector s(n_qubits);
        double norm2 = 0.0;
        for (auto& a : s.amps_) {
            // Box-Muller on counter-based uniforms.
            double u1 = rng.next_double(), u2 = rng.next_double();
            while (u1 <= 0.0) u1 = rng.next_double();
            double r = std::sqrt(-2.0 * std::log(u1));
            double phi = 2.0 * std::numbers::pi * u2;
            a = cdouble{r * std::cos(phi), r * std::sin(phi)};
            norm2 += std::norm(a);
        }
        double inv = 1.0 / std::sqrt(norm2);
        for (auto& a : s.amps_) a *= inv;
        return s;
    }

    int n_qubits() const { return n_qubits_; }
    std::uint64_t dim() const { return std::uint64_t{1} << n_qubits_; }

    const cdouble& operator[](std::uint64_t i) const { return amps_[i]; }
    const std::vector<cdouble>& amplitudes() const { return amps_; }

    double norm() const {
        double s = 0.0;
        for (const auto& a : amps_) s += std::norm(a);
        return std::sqrt(s);
    }

    std::vector<double> probabilities() const {
        std::vector<double> p(amps_.size());
        for (size_t i = 0; i < amps_.size(); ++i) p[i] = std::norm(amps_[i]);
        return p;
    }

    void apply_1q(int qubit, const std::array<std::array<cdouble, 2>, 2>& u) {
        check_qubit(qubit);
        const std::uint64_t step = std::uint64_t{1} << (qubit - 1);
        for (std::uint64_t base = 0; base < dim(); base += step << 1) {
            for (std::uint64_t off = 0; off < step; ++off) {
                const std::uint64_t i0 = base + off;
                const std::uint64_t i1 = i0 + step;
                const cdouble a = amps_[i0], b = amps_[i1];
                amps_[i0] = u[0][0] * a + u[0][1] * b;
                amps_[i1] = u[1][0] * a + u[1][1] * b;
            }
        }
    }

    void apply_x(int qubit) {
        apply_1q(qubit, {{{cdouble{0, 0}, cdouble{1, 0}}, {cdouble{1, 0}, cdouble{0, 0}}}});
    }

    void apply_h(int qubit) {
        const double r = 1.0 / std::sqrt(2.0);
        apply_1q(qubit, {{{cdouble{r, 0}, cdouble{r, 0}}, {cdouble{r, 0}, cdouble{-r, 0}}}});
    }

    void apply_rx(int qubit, double theta) {
        const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
        apply_1q(qubit, {{{cdouble{c, 0}, cdouble{0, -s}}, {cdouble{0, -s}, cdouble{c, 0}}}});
    }

    void apply_rz(int qubit, double theta) {
        const cdouble e0{std::cos(theta / 2.0), -std::sin(theta / 2.0)};
        const cdouble e1{std::cos(theta / 2.0), std::sin(theta / 2.0)};
        apply_1q(qubit, {{{e0, cdouble{0, 0}}, {cdouble{0, 0}, e1}}});
    }

    void apply_cnot(int control, int target) {
        check_qubit(control);
        check_qubit(target);
        if (control == target) throw std::invalid_argument("CNOT control equals target");
        const std::uint64_t cbit = std::uint64_t{1} << (control - 1);
        const std::uint64_t tbit = std::uint64_t{1} << (target - 1);
        for (std::uint64_t i = 0; i < dim(); ++i)
            if ((i & cbit) && !(i & tbit)) std::swap(amps_[i], amps_[i | tbit]);
    }

  private:
    static int check_size(int n_qubits) {
        if (n_qubits < 1 || n_qubits > kMaxQubits)
            throw std::invalid_argument("n_qubits must be in 1..20");
        return n_qubits;
    }
    void check_qubit(int qubit) const {
        if (qubit < 1 || qubit > n_qubits_) throw std::out_of_range("qubit index out of range");
    }

    int n_qubits_;
    std::vector<cdouble> amps_;
};

struct Gate {
    enum class Kind { x, h, rx, rz, cnot } kind;
    int qubit = 0;   // target (rx/rz/x/h) or control (cnot)
    int target = 0;  // cnot target
    double angle = 0.0;
};

inline StateVector apply_gate(StateVector state, const Gate& g) {
    switch (g.kind) {
        case Gate::Kind::x: state.apply_x(g.qubit); break;
        case Gate::Kind::h: state.apply_h(g.qubit); break;
        case Gate::Kind::rx: state.apply_rx(g.qubit, g.angle); break;
        case Gate::Kind::rz: state.apply_rz(g.qubit, g.angle); break;
        case Gate::Kind::cnot: state.apply_cnot(g.qubit, g.target); break;
    }
    return state;
}

// <psi| P |psi> for a Pauli string; exact up to floating point.
inline double expectation(const StateVector& state, const PauliString& p) {
    if (p.size() != state.n_qubits()) throw std::invalid_argument("operator/state size mismatch");
    const std::uint64_t zmask = p.mask_of(Pauli::Z) | p.mask_of(Pauli::Y);
    const std::uint64_t xmask = p.mask_of(Pauli::X) | p.mask_of(Pauli::Y);
    // Global phase from Y = i XZ factors.
    const int ny = static_cast<int>(std::popcount(p.mask_of(Pauli::Y)));
    static constexpr cdouble iphase[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    const cdouble phase = iphase[ny % 4];

    cdouble acc{0.0, 0.0};
    for (std::uint64_t i = 0; i < state.dim(); ++i) {
        // P|i> = phase * (-1)^{popcount(i & zmask)} |i ^ xmask>
        const double sign = (std::popcount(i & zmask) & 1) ? -1.0 : 1.0;
        acc += std::conj(state[i ^ xmask]) * (phase * sign * state[i]);
    }
    return acc.real();
}

// Diagonal fast path: expectation of the Z string with support `zmask`
// against a probability vector over basis indices.
inline double z_expectation(const std::vector<double>& probs, std::uint64_t zmask) {
    double acc = 0.0;
    for (std::uint64_t i = 0; i < probs.size(); ++i)
        acc += (std::popcount(i & zmask) & 1) ? -probs[i] : probs[i];
    return acc;
}

inline double expectation(const StateVector& state, const PauliTermSum& h) {
    if (h.n_qubits != state.n_qubits()) throw std::invalid_argument("operator/state size mismatch");
    double acc = 0.0;
    for (const auto& t : h.terms) acc += t.coeff * expectation(state, t.string);
    return acc;
}

// Affine Bloch-ball map r -> M r + c of a single-qubit channel.
struct SingleQubitChannel {
    std::array<std::array<double, 3>, 3> m{};
    std::array<double, 3> c{};
};

// Classical readout channel of a projective Z measurement followed by
// asymmetric bit flips: M = diag(0, 0, 1-p0-p1), c = (0, 0, p1-p0).
// p0 + p1 = 1 collapses the ball to a single point (mitigation impossible).
inline SingleQubitChannel readout_channel(double p0, double p1) {
    if (p0 < 0.0 || p0 > 1.0 || p1 < 0.0 || p1 > 1.0)
        throw std::invalid_argument("flip probability outside [0,1]");
    SingleQubitChannel ch;
    ch.m[2][2] = 1.0 - p0 - p1;
    ch.c[2] = p1 - p0;
    return ch;
}

} // namespace qem
