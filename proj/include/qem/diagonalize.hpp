#pragma once

#include <bit>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "qem/pauli.hpp"
#include "qem/state.hpp"

namespace qem {

inline constexpr int kMaxDiagQubits = 12; // dense 2^N x 2^N eigensolve budget

// Dense Hermitian matrix of a Pauli-term sum.
inline Eigen::MatrixXcd dense_matrix(const PauliTermSum& h) {
    if (h.n_qubits < 1 || h.n_qubits > kMaxDiagQubits)
        throw std::invalid_argument("dense matrix limited to 1..12 qubits");
    const std::uint64_t dim = std::uint64_t{1} << h.n_qubits;
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(dim),
                                                static_cast<Eigen::Index>(dim));
    static constexpr cdouble iphase[4] = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    for (const auto& term : h.terms) {
        const std::uint64_t zmask = term.string.mask_of(Pauli::Z) | term.string.mask_of(Pauli::Y);
        const std::uint64_t xmask = term.string.mask_of(Pauli::X) | term.string.mask_of(Pauli::Y);
        const cdouble phase = iphase[std::popcount(term.string.mask_of(Pauli::Y)) % 4];
        for (std::uint64_t j = 0; j < dim; ++j) {
            const double sign = (std::popcount(j & zmask) & 1) ? -1.0 : 1.0;
            m(static_cast<Eigen::Index>(j ^ xmask), static_cast<Eigen::Index>(j)) +=
                term.coeff * phase * sign;
        }
    }
    return m;
}

// Minimal eigenvalue and a normalized eigenvector of the (dense) operator.
// Ties are broken deterministically: the solver sorts eigenvalues ascending
// and we take index 0.
inline std::pair<double, StateVector> ground_state(const PauliTermSum& h) {
    Eigen::MatrixXcd m = dense_matrix(h);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigensolver failed");
    const double energy = solver.eigenvalues()(0);
    const auto col = solver.eigenvectors().col(0);
    std::vector<cdouble> amps(static_cast<size_t>(col.size()));
    for (Eigen::Index i = 0; i < col.size(); ++i) amps[static_cast<size_t>(i)] = col(i);
    return {energy, StateVector::from_amplitudes(h.n_qubits, std::move(amps))};
}

} // namespace qem
