#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "qem/pauli.hpp"

namespace qem {

// Ring of N spins with coupling J and field h; site N+1 is identified with
// site 1.  The studied regime is J < 0, h > 0.
struct IsingParams {
    int n = 2;
    double j = -1.0;
    double h = 2.0;

    void validate() const {
        if (n < 2) throw std::invalid_argument("Ising ring needs N >= 2");
    }
};

// Field/coupling split of a ground-state energy, plus the three measurement
// outcomes of the transverse model (E1 = E_ZZ + E_X, E2 = -E_ZZ,
// E3 = E_ZZ - E_X).
struct EnergyDecomposition {
    double e_z = 0.0;
    double e_zz = 0.0;
    double e_x = 0.0;
    double e1 = 0.0;
    double e2 = 0.0;
    double e3 = 0.0;
    double total = 0.0;
};

// J sum_q Z_q Z_{q+1} + h sum_q Z_q with the periodic wrap term included; the
// N=2 ring keeps both (duplicate) bond terms.  Zero-coefficient groups are
// dropped.
inline PauliTermSum li_hamiltonian(const IsingParams& p) {
    p.validate();
    PauliTermSum sum;
    sum.n_qubits = p.n;
    if (p.j != 0.0)
        for (int q = 1; q <= p.n; ++q) {
            PauliString s = PauliString::identity(p.n);
            s.set(q, Pauli::Z);
            s.set(q % p.n + 1, Pauli::Z);
            sum.terms.push_back({p.j, std::move(s)});
        }
    if (p.h != 0.0)
        for (int q = 1; q <= p.n; ++q)
            sum.terms.push_back({p.h, PauliString::single_z(p.n, q)});
    return sum;
}

inline PauliTermSum ti_hamiltonian(const IsingParams& p) {
    p.validate();
    PauliTermSum sum;
    sum.n_qubits = p.n;
    if (p.j != 0.0)
        for (int q = 1; q <= p.n; ++q) {
            PauliString s = PauliString::identity(p.n);
            s.set(q, Pauli::Z);
            s.set(q % p.n + 1, Pauli::Z);
            sum.terms.push_back({p.j, std::move(s)});
        }
    if (p.h != 0.0)
        for (int q = 1; q <= p.n; ++q) {
            PauliString s = PauliString::identity(p.n);
            s.set(q, Pauli::X);
            sum.terms.push_back({p.h, std::move(s)});
        }
    return sum;
}

// E0 = E_ZZ + E_Z = NJ - Nh, valid in the regime J < 0, h >= 0 where the
// all-|1> basis state is a ground state.
inline EnergyDecomposition li_ground_energy(const IsingParams& p) {
    p.validate();
    if (p.j >= 0.0 || p.h < 0.0)
        throw std::domain_error("closed form asserted only for J < 0, h >= 0");
    EnergyDecomposition e;
    e.e_zz = p.n * p.j;
    e.e_z = -p.n * p.h;
    e.total = e.e_zz + e.e_z;
    return e;
}

// Mean of noisy ground-state energies at equal flip probability p:
// (1-2p) E_Z + (1-2p)^2 E_ZZ.
inline double li_noisy_mean(const IsingParams& p, double flip_p) {
    if (flip_p < 0.0 || flip_p > 1.0) throw std::invalid_argument("flip probability outside [0,1]");
    const EnergyDecomposition e = li_ground_energy(p);
    const double f = 1.0 - 2.0 * flip_p;
    return f * e.e_z + f * f * e.e_zz;
}

// Free-fermion ground-state energy of the transverse model:
//   E0 = -1/2 sum_k gamma (alpha^2 + 4 beta^2),
// with alpha = 2h - 2J cos(2 pi k / N), beta = J sin(2 pi k / N), and
// gamma = 1 / sqrt(alpha^2 + 4 beta^2) (the printed sign(alpha)/alpha form,
// simplified where it is defined).  The momentum sum runs over k = -(N-1)/2
// ... (N-1)/2 in unit steps, so k is half-integer for even N.  Validated
// against dense diagonalization in the J < 0, h >= 0 regime.
inline EnergyDecomposition ti_exact_ground_energy(const IsingParams& p) {
    p.validate();
    EnergyDecomposition e;
    for (int i = 0; i < p.n; ++i) {
        const double k = -0.5 * (p.n - 1) + i;
        const double theta = 2.0 * std::numbers::pi * k / p.n;
        const double alpha = 2.0 * p.h - 2.0 * p.j * std::cos(theta);
        const double beta = p.j * std::sin(theta);
        const double gamma = 1.0 / std::sqrt(alpha * alpha + 4.0 * beta * beta);
        e.e_zz += -0.5 * gamma * (4.0 * p.j * p.j - 4.0 * p.j * p.h * std::cos(theta));
        e.e_x += -0.5 * gamma * (4.0 * p.h * p.h - 4.0 * p.j * p.h * std::cos(theta));
    }
    e.total = e.e_zz + e.e_x;
    e.e1 = e.total;
    e.e2 = -e.e_zz;
    e.e3 = e.e_zz - e.e_x;
    return e;
}

// Mean of noisy transverse-model energies, computed through both algebraic
// routes: (1-2p) E_X + (1-2p)^2 E_ZZ and the outcome form
// (1-p)^2 E1 + 2p(1-p) E2 + p^2 E3.  The two must agree to 1e-12.
inline double ti_noisy_mean(const IsingParams& p, double flip_p) {
    if (flip_p < 0.0 || flip_p > 1.0) throw std::invalid_argument("flip probability outside [0,1]");
    const EnergyDecomposition e = ti_exact_ground_energy(p);
    const double f = 1.0 - 2.0 * flip_p;
    const double via_factors = f * e.e_x + f * f * e.e_zz;
    const double q = 1.0 - flip_p;
    const double via_outcomes = q * q * e.e1 + 2.0 * flip_p * q * e.e2 + flip_p * flip_p * e.e3;
    const double scale = std::max({std::abs(via_factors), std::abs(via_outcomes), 1.0});
    if (std::abs(via_factors - via_outcomes) > 1e-12 * scale)
        throw std::logic_error("noisy-mean routes disagree");
    return via_factors;
}

enum class DeltaEModel {
    li_noninteracting, // field part only: delta = -2E/s
    li_interacting,    // coupling part only: delta = -4E(1-p)/s
    ti                 // transverse model: delta = -(2 E_X + 4 E_ZZ - 4p E_ZZ)/s
};

// Deviation from E per bit flip, normalized by the number of shots; satisfies
// E + s*p*delta = mean of the noisy energy.
inline double delta_e(DeltaEModel model, const IsingParams& p, double flip_p, long shots) {
    if (shots < 1) throw std::invalid_argument("shots must be >= 1");
    if (flip_p < 0.0 || flip_p > 1.0) throw std::invalid_argument("flip probability outside [0,1]");
    const double s = static_cast<double>(shots);
    switch (model) {
        case DeltaEModel::li_noninteracting: {
            const double e = -p.n * p.h; // ground energy of the field part
            return -2.0 * e / s;
        }
        case DeltaEModel::li_interacting: {
            const double e = p.n * p.j; // ground energy of the coupling part
            return -4.0 * e * (1.0 - flip_p) / s;
        }
        case DeltaEModel::ti: {
            const EnergyDecomposition e = ti_exact_ground_energy(p);
            return -(2.0 * e.e_x + 4.0 * e.e_zz - 4.0 * flip_p * e.e_zz) / s;
        }
    }
    throw std::invalid_argument("unknown model");
}

// Binomial noise model of an energy histogram: k of s shots are recorded
// correctly with probability mass C(s,k)(1-p)^k p^{s-k}, and the measured
// energy is E(k) = E + (s-k) delta, giving mean E + s*p*delta.
struct BinomialHistogramModel {
    double mean = 0.0;
    std::vector<double> pmf; // index k = 0..s
    std::vector<double> energy; // E(k)
};

inline BinomialHistogramModel binomial_histogram_model(double e, double delta, long shots,
                                                       double flip_p) {
    if (shots < 1) throw std::invalid_argument("shots must be >= 1");
    if (flip_p < 0.0 || flip_p > 1.0) throw std::invalid_argument("flip probability outside [0,1]");
    BinomialHistogramModel model;
    model.mean = e + static_cast<double>(shots) * flip_p * delta;
    model.pmf.resize(static_cast<size_t>(shots) + 1);
    model.energy.resize(static_cast<size_t>(shots) + 1);
    const double s = static_cast<double>(shots);
    for (long k = 0; k <= shots; ++k) {
        double logp;
        if (flip_p == 0.0)
            logp = k == shots ? 0.0 : -std::numeric_limits<double>::infinity();
        else if (flip_p == 1.0)
            logp = k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
        else
            logp = std::lgamma(s + 1.0) - std::lgamma(k + 1.0) - std::lgamma(s - k + 1.0) +
                   k * std::log1p(-flip_p) + (s - k) * std::log(flip_p);
        model.pmf[static_cast<size_t>(k)] = std::exp(logp);
        model.energy[static_cast<size_t>(k)] = e + (s - k) * delta;
    }
    return model;
}

} // namespace qem
