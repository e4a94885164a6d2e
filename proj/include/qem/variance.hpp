#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "qem/diagonalize.hpp"
#include "qem/ising.hpp"
#include "qem/mitigation.hpp"
#include "qem/pauli.hpp"
#include "qem/readout.hpp"
#include "qem/rng.hpp"
#include "qem/state.hpp"

namespace qem {

// Coefficients of the single-qubit two-copy variance operator on the basis
// {Z(x)Z, Z(x)1, 1(x)Z, 1(x)1}.
struct TwoCopyZVariance {
    double zz = 0.0;
    double z_one = 0.0;
    double one_z = 0.0;
    double one = 0.0;
};

inline TwoCopyZVariance var_single_z(double p0, double p1) {
    if (p0 < 0.0 || p0 > 1.0 || p1 < 0.0 || p1 > 1.0)
        throw std::invalid_argument("flip probability outside [0,1]");
    TwoCopyZVariance v;
    v.zz = (p0 + p1) * (1.0 - p0 - p1) + 2.0 * p0 * p1;
    v.z_one = -(1.0 - p0 - p1) * (p1 - p0);
    v.one_z = v.z_one;
    v.one = p0 + p1 - p0 * p0 - p1 * p1;
    return v;
}

namespace detail {

// Shared-flip two-copy weight: E[~Z (x) ~Z] = a Z(x)Z + (1-a) 1(x)1 with a
// collecting the two outcomes whose signs square away.
inline double shared_keep_weight(const ReadoutModel& model, int qubit) {
    const double p0 = model.p0(qubit), p1 = model.p1(qubit);
    return (1.0 - p0) * (1.0 - p1) + p0 * p1;
}

// Marginal probability vector of the support bits of a basis distribution.
inline std::vector<double> support_marginal(const std::vector<double>& probs,
                                            const std::vector<int>& support) {
    std::vector<double> marg(std::uint64_t{1} << support.size(), 0.0);
    for (std::uint64_t j = 0; j < probs.size(); ++j) {
        if (probs[j] == 0.0) continue;
        std::uint64_t m = 0;
        for (size_t i = 0; i < support.size(); ++i)
            if (j >> (support[i] - 1) & 1) m |= std::uint64_t{1} << i;
        marg[m] += probs[j];
    }
    return marg;
}

} // namespace detail

// Variance of the noisy expectation of Z on `support`, evaluated as the
// two-copy operator on |psi>(x)|psi>.  The operator is assembled per qubit in
// copy-interleaved order and the reordering permutation is applied as an
// explicit basis-index interleave when contracting with the product state.
inline double var_tensor_z(const std::vector<int>& support, const ReadoutModel& model,
                           const StateVector& state) {
    if (support.empty()) return 0.0;
    if (support.size() > 6) throw std::invalid_argument("two-copy representation limited to Q <= 6");
    std::vector<int> qs = support;
    std::sort(qs.begin(), qs.end());
    for (int q : qs)
        if (q < 1 || q > state.n_qubits()) throw std::out_of_range("support qubit out of range");

    const size_t q_count = qs.size();
    const std::uint64_t copy_dim = std::uint64_t{1} << q_count;
    const std::uint64_t two_copy_dim = copy_dim * copy_dim;

    // Diagonals over interleaved bits: qubit i occupies bits 2i (copy 1) and
    // 2i+1 (copy 2).
    std::vector<double> second(two_copy_dim, 1.0); // prod_q E[~Z (x) ~Z]
    std::vector<double> mean_sq(two_copy_dim, 1.0); // prod_q (E ~Z)(x)(E ~Z)
    for (size_t i = 0; i < q_count; ++i) {
        const int q = qs[i];
        const double a = detail::shared_keep_weight(model, q);
        const double gz = model.gamma_z(q), gi = model.gamma_i(q);
        for (std::uint64_t t = 0; t < two_copy_dim; ++t) {
            const int b1 = static_cast<int>(t >> (2 * i) & 1);
            const int b2 = static_cast<int>(t >> (2 * i + 1) & 1);
            const double z1 = b1 ? -1.0 : 1.0, z2 = b2 ? -1.0 : 1.0;
            second[t] *= a * z1 * z2 + (1.0 - a);
            mean_sq[t] *= (gi + gz * z1) * (gi + gz * z2);
        }
    }

    const std::vector<double> marg = detail::support_marginal(state.probabilities(), qs);
    double acc = 0.0;
    for (std::uint64_t m1 = 0; m1 < copy_dim; ++m1) {
        if (marg[m1] == 0.0) continue;
        for (std::uint64_t m2 = 0; m2 < copy_dim; ++m2) {
            if (marg[m2] == 0.0) continue;
            std::uint64_t t = 0; // interleave: copy-1 bits even, copy-2 bits odd
            for (size_t i = 0; i < q_count; ++i) {
                if (m1 >> i & 1) t |= std::uint64_t{1} << (2 * i);
                if (m2 >> i & 1) t |= std::uint64_t{1} << (2 * i + 1);
            }
            acc += marg[m1] * marg[m2] * (second[t] - mean_sq[t]);
        }
    }
    return acc;
}

// Bit-flip variance of a diagonal operator sum measured from one bit-string
// distribution: enumerate the joint per-qubit flip outcomes H_alpha and take
// sum_a p_a <H_a>^2 - (sum_a p_a <H_a>)^2.
inline double var_bitstring(const PauliTermSum& h, const ReadoutModel& model,
                            const StateVector& state) {
    if (h.n_qubits != state.n_qubits() || h.n_qubits != model.n_qubits())
        throw std::invalid_argument("operator/model/state size mismatch");
    std::uint64_t union_mask = 0;
    for (const auto& t : h.terms) {
        if (!t.string.diagonal()) throw std::invalid_argument("operator must be over {I,Z}");
        union_mask |= t.string.mask_of(Pauli::Z);
    }
    std::vector<int> union_support;
    for (int q = 1; q <= h.n_qubits; ++q)
        if (union_mask >> (q - 1) & 1) union_support.push_back(q);
    if (union_support.size() > 10)
        throw std::invalid_argument("register too large to enumerate flip realizations");

    const std::vector<double> probs = state.probabilities();
    std::unordered_map<std::uint64_t, double> zcache;
    auto zval = [&](std::uint64_t mask) {
        auto it = zcache.find(mask);
        if (it != zcache.end()) return it->second;
        const double v = z_expectation(probs, mask);
        zcache.emplace(mask, v);
        return v;
    };

    const size_t nq = union_support.size();
    std::uint64_t n_outcomes = 1;
    for (size_t i = 0; i < nq; ++i) n_outcomes *= 4;

    double mean = 0.0, second = 0.0;
    for (std::uint64_t code = 0; code < n_outcomes; ++code) {
        double prob = 1.0;
        std::uint64_t keep = 0, neg = 0;
        std::uint64_t c = code;
        for (size_t i = 0; i < nq; ++i, c /= 4) {
            const int q = union_support[i];
            const double p0 = model.p0(q), p1 = model.p1(q);
            const std::uint64_t bit = std::uint64_t{1} << (q - 1);
            switch (c % 4) {
                case 0: prob *= (1.0 - p0) * (1.0 - p1); keep |= bit; break;       // +Z
                case 1: prob *= p0 * (1.0 - p1); neg |= bit; break;                // -1
                case 2: prob *= (1.0 - p0) * p1; break;                            // +1
                case 3: prob *= p0 * p1; keep |= bit; neg |= bit; break;           // -Z
            }
        }
        if (prob == 0.0) continue;
        double value = 0.0;
        for (const auto& t : h.terms) {
            const std::uint64_t tmask = t.string.mask_of(Pauli::Z);
            const double sign = (std::popcount(tmask & neg) & 1) ? -1.0 : 1.0;
            value += t.coeff * sign * zval(tmask & keep);
        }
        mean += prob * value;
        second += prob * value * value;
    }
    return second - mean * mean;
}

// A Pauli term reduced to its measurement frame: the {I,Z} skeleton `z_mask`
// is what gets read out, either directly (z frame) or after a Hadamard on
// every qubit (x frame).
struct FrameTerm {
    double coeff = 0.0;
    std::uint64_t z_mask = 0;
    bool x_frame = false;
};

enum class VarianceMethod { m1, m2, m3 };

// Quantum-variance convention for Methods 2/3: `nominal` evaluates
// <G^2> - <G>^2 of the measured operator with its nominal (unflipped)
// letters and vanishes exactly on its eigenstates; `flip_averaged` (default)
// averages the per-realization quantum variance over the flip distribution,
// which is what the sampled pipeline produces.
enum class QmConvention { nominal, flip_averaged };

struct VarianceBreakdown {
    VarianceMethod method = VarianceMethod::m1;
    double var_bitflip = 0.0;
    double var_quantum = 0.0;
    double var_total = 0.0;
    long shots = 1;
};

namespace detail {

// Cached frame expectations of one state: value(frame, mask) is the
// z-expectation of `mask` against the z- or x-basis probabilities.
class FrameValues {
  public:
    explicit FrameValues(const StateVector& state) : state_(state), probs_z_(state.probabilities()) {
        StateVector rotated = state;
        for (int q = 1; q <= state.n_qubits(); ++q) rotated.apply_h(q);
        probs_x_ = rotated.probabilities();
    }

    const StateVector& state() const { return state_; }
    const std::vector<double>& probs(bool x_frame) const { return x_frame ? probs_x_ : probs_z_; }

    double value(bool x_frame, std::uint64_t mask) {
        auto& cache = x_frame ? cache_x_ : cache_z_;
        auto it = cache.find(mask);
        if (it != cache.end()) return it->second;
        const double v = z_expectation(probs(x_frame), mask);
        cache.emplace(mask, v);
        return v;
    }

    // <psi| prod_q M_q |psi> with per-qubit 2x2 matrices; used for operator
    // products that mix measurement frames.
    double product_value(const std::vector<std::pair<int, std::array<std::array<cdouble, 2>, 2>>>& ops) {
        StateVector work = state_;
        for (const auto& [qubit, m] : ops) work.apply_1q(qubit, m);
        cdouble acc{0.0, 0.0};
        for (std::uint64_t i = 0; i < state_.dim(); ++i)
            acc += std::conj(state_[i]) * work[i];
        return acc.real();
    }

  private:
    StateVector state_;
    std::vector<double> probs_z_;
    std::vector<double> probs_x_;
    std::unordered_map<std::uint64_t, double> cache_z_;
    std::unordered_map<std::uint64_t, double> cache_x_;
};

inline std::vector<int> mask_qubits(std::uint64_t mask) {
    std::vector<int> qs;
    for (int q = 1; mask; ++q, mask >>= 1)
        if (mask & 1) qs.push_back(q);
    return qs;
}

// E over shared flips of <~O_a> <~O_b>: expand per qubit into kept/dropped
// letters on each copy and contract with the frame expectations.
inline double pair_two_copy(const FrameTerm& a, const FrameTerm& b, const ReadoutModel& model,
                            FrameValues& vals) {
    const std::vector<int> qs = mask_qubits(a.z_mask | b.z_mask);
    double total = 0.0;
    struct Item {
        double w;
        std::uint64_t ma, mb;
    };
    std::vector<Item> stack{{1.0, 0, 0}};
    for (int q : qs) {
        const std::uint64_t bit = std::uint64_t{1} << (q - 1);
        const bool in_a = a.z_mask & bit, in_b = b.z_mask & bit;
        std::vector<Item> next;
        next.reserve(stack.size() * 2);
        for (const Item& it : stack) {
            if (in_a && in_b) {
                const double keep = shared_keep_weight(model, q);
                next.push_back({it.w * keep, it.ma | bit, it.mb | bit});
                if (keep != 1.0) next.push_back({it.w * (1.0 - keep), it.ma, it.mb});
            } else if (in_a) {
                next.push_back({it.w * model.gamma_z(q), it.ma | bit, it.mb});
                if (model.gamma_i(q) != 0.0) next.push_back({it.w * model.gamma_i(q), it.ma, it.mb});
            } else {
                next.push_back({it.w * model.gamma_z(q), it.ma, it.mb | bit});
                if (model.gamma_i(q) != 0.0) next.push_back({it.w * model.gamma_i(q), it.ma, it.mb});
            }
        }
        stack = std::move(next);
    }
    for (const Item& it : stack)
        total += it.w * vals.value(a.x_frame, it.ma) * vals.value(b.x_frame, it.mb);
    return total;
}

// E over shared flips of <~O_a ~O_b> (same copy).  On a shared qubit the two
// letters multiply: same frame gives the identity, mixed frames give the 2x2
// product Z*X (or X*Z) handled by the general evaluator.
inline double pair_same_copy(const FrameTerm& a, const FrameTerm& b, const ReadoutModel& model,
                             FrameValues& vals) {
    const std::vector<int> qs = mask_qubits(a.z_mask | b.z_mask);
    struct Item {
        double w;
        std::uint64_t ma, mb, mboth;
    };
    std::vector<Item> stack{{1.0, 0, 0, 0}};
    for (int q : qs) {
        const std::uint64_t bit = std::uint64_t{1} << (q - 1);
        const bool in_a = a.z_mask & bit, in_b = b.z_mask & bit;
        std::vector<Item> next;
        next.reserve(stack.size() * 2);
        for (const Item& it : stack) {
            if (in_a && in_b) {
                const double keep = shared_keep_weight(model, q);
                next.push_back({it.w * keep, it.ma, it.mb, it.mboth | bit});
                if (keep != 1.0) next.push_back({it.w * (1.0 - keep), it.ma, it.mb, it.mboth});
            } else if (in_a) {
                next.push_back({it.w * model.gamma_z(q), it.ma | bit, it.mb, it.mboth});
                if (model.gamma_i(q) != 0.0)
                    next.push_back({it.w * model.gamma_i(q), it.ma, it.mb, it.mboth});
            } else {
                next.push_back({it.w * model.gamma_z(q), it.ma, it.mb | bit, it.mboth});
                if (model.gamma_i(q) != 0.0)
                    next.push_back({it.w * model.gamma_i(q), it.ma, it.mb, it.mboth});
            }
        }
        stack = std::move(next);
    }

    static constexpr std::array<std::array<cdouble, 2>, 2> kZ{{{cdouble{1, 0}, cdouble{0, 0}},
                                                               {cdouble{0, 0}, cdouble{-1, 0}}}};
    static constexpr std::array<std::array<cdouble, 2>, 2> kX{{{cdouble{0, 0}, cdouble{1, 0}},
                                                               {cdouble{1, 0}, cdouble{0, 0}}}};
    static constexpr std::array<std::array<cdouble, 2>, 2> kZX{{{cdouble{0, 0}, cdouble{1, 0}},
                                                                {cdouble{-1, 0}, cdouble{0, 0}}}};
    static constexpr std::array<std::array<cdouble, 2>, 2> kXZ{{{cdouble{0, 0}, cdouble{-1, 0}},
                                                                {cdouble{1, 0}, cdouble{0, 0}}}};

    double total = 0.0;
    if (a.x_frame == b.x_frame) {
        // Z^2 = 1 on shared qubits; only the single-sided letters survive.
        for (const Item& it : stack)
            total += it.w * vals.value(a.x_frame, it.ma | it.mb);
        return total;
    }
    const auto& mat_a = a.x_frame ? kX : kZ;
    const auto& mat_b = b.x_frame ? kX : kZ;
    const auto& mat_ab = a.x_frame ? kXZ : kZX;
    for (const Item& it : stack) {
        std::vector<std::pair<int, std::array<std::array<cdouble, 2>, 2>>> ops;
        for (int q : mask_qubits(it.ma)) ops.emplace_back(q, mat_a);
        for (int q : mask_qubits(it.mb)) ops.emplace_back(q, mat_b);
        for (int q : mask_qubits(it.mboth)) ops.emplace_back(q, mat_ab);
        total += it.w * vals.product_value(ops);
    }
    return total;
}

// E over flips of <~O_a>: subset expansion of the gamma weights.
inline double term_first_moment(const FrameTerm& a, const ReadoutModel& model, FrameValues& vals) {
    const std::vector<int> qs = mask_qubits(a.z_mask);
    struct Item {
        double w;
        std::uint64_t m;
    };
    std::vector<Item> stack{{1.0, 0}};
    for (int q : qs) {
        const std::uint64_t bit = std::uint64_t{1} << (q - 1);
        std::vector<Item> next;
        next.reserve(stack.size() * 2);
        for (const Item& it : stack) {
            next.push_back({it.w * model.gamma_z(q), it.m | bit});
            if (model.gamma_i(q) != 0.0) next.push_back({it.w * model.gamma_i(q), it.m});
        }
        stack = std::move(next);
    }
    double total = 0.0;
    for (const Item& it : stack) total += it.w * vals.value(a.x_frame, it.m);
    return total;
}

// Bit-flip variance of a group measured from one distribution:
// sum_ab l_a l_b E<~O_a><~O_b> - (sum_a l_a E<~O_a>)^2.
inline double group_bf_variance(const std::vector<FrameTerm>& group, const ReadoutModel& model,
                                FrameValues& vals) {
    double second = 0.0, mean = 0.0;
    for (const auto& a : group) mean += a.coeff * term_first_moment(a, model, vals);
    for (const auto& a : group)
        for (const auto& b : group)
            second += a.coeff * b.coeff * pair_two_copy(a, b, model, vals);
    return second - mean * mean;
}

// Quantum variance of a group per the chosen convention.
inline double group_qm_variance(const std::vector<FrameTerm>& group, const ReadoutModel& model,
                                FrameValues& vals, QmConvention convention) {
    if (convention == QmConvention::nominal) {
        const ReadoutModel clean = ReadoutModel::noiseless(model.n_qubits());
        double sq = 0.0, mean = 0.0;
        for (const auto& a : group) mean += a.coeff * vals.value(a.x_frame, a.z_mask);
        for (const auto& a : group)
            for (const auto& b : group)
                sq += a.coeff * b.coeff * pair_same_copy(a, b, clean, vals);
        return sq - mean * mean;
    }
    // flip-averaged: E_F[<G_F^2> - <G_F>^2]
    double sq = 0.0, second = 0.0;
    for (const auto& a : group)
        for (const auto& b : group) {
            sq += a.coeff * b.coeff * pair_same_copy(a, b, model, vals);
            second += a.coeff * b.coeff * pair_two_copy(a, b, model, vals);
        }
    return sq - second;
}

} // namespace detail

// Closed-form variance of histogram means for a grouped measurement of
// sum-of-Pauli observables.  Method 1 measures every term independently,
// Method 2 treats all terms as one distribution, Method 3 uses the given
// groups.  `shots` is per term for Method 1 and per distribution otherwise.
inline VarianceBreakdown var_method_groups(VarianceMethod method,
                                           const std::vector<std::vector<FrameTerm>>& groups,
                                           const ReadoutModel& model, const StateVector& state,
                                           long shots,
                                           QmConvention convention = QmConvention::flip_averaged) {
    if (shots < 1) throw std::invalid_argument("shots must be >= 1");
    detail::FrameValues vals(state);
    VarianceBreakdown out;
    out.method = method;
    out.shots = shots;

    if (method == VarianceMethod::m1) {
        for (const auto& g : groups)
            for (const auto& t : g) {
                FrameTerm unit{1.0, t.z_mask, t.x_frame};
                const double m = detail::term_first_moment(unit, model, vals);
                const double bf = detail::pair_two_copy(unit, unit, model, vals) - m * m;
                const double z = vals.value(t.x_frame, t.z_mask);
                out.var_bitflip += t.coeff * t.coeff * bf;
                out.var_quantum += t.coeff * t.coeff * (1.0 - z * z);
            }
    } else {
        std::vector<std::vector<FrameTerm>> effective;
        if (method == VarianceMethod::m2) {
            effective.emplace_back();
            for (const auto& g : groups)
                effective[0].insert(effective[0].end(), g.begin(), g.end());
        } else {
            effective = groups;
        }
        for (const auto& g : effective) {
            out.var_bitflip += detail::group_bf_variance(g, model, vals);
            out.var_quantum += detail::group_qm_variance(g, model, vals, convention);
        }
    }
    out.var_total = (out.var_bitflip + out.var_quantum) / static_cast<double>(shots);
    return out;
}

// Transverse-model measurement groups: the coupling terms read out directly
// and the field terms after a Hadamard on every qubit.  With
// `corrected_coefficients` the couplings carry the bit-flip corrected values
// J_p = J (1-2p)^{-2}, h_p = h (1-2p)^{-1}.
inline std::vector<std::vector<FrameTerm>> ti_measurement_groups(const IsingParams& p,
                                                                 double flip_p,
                                                                 bool corrected_coefficients) {
    p.validate();
    double jc = p.j, hc = p.h;
    if (corrected_coefficients) {
        const double f = 1.0 - 2.0 * flip_p;
        if (std::abs(f) < kSingularTol) {
            std::vector<int> all(static_cast<size_t>(p.n));
            for (int q = 1; q <= p.n; ++q) all[static_cast<size_t>(q - 1)] = q;
            throw SingularOmegaError(all);
        }
        jc = p.j / (f * f);
        hc = p.h / f;
    }
    std::vector<std::vector<FrameTerm>> groups(2);
    for (int q = 1; q <= p.n; ++q) {
        const std::uint64_t bond = (std::uint64_t{1} << (q - 1)) | (std::uint64_t{1} << (q % p.n));
        groups[0].push_back({jc, bond, false});
        groups[1].push_back({hc, std::uint64_t{1} << (q - 1), true});
    }
    return groups;
}

// Longitudinal-model groups; both read out in the computational basis but
// from separate distributions.
inline std::vector<std::vector<FrameTerm>> li_measurement_groups(const IsingParams& p,
                                                                 double flip_p,
                                                                 bool corrected_coefficients) {
    p.validate();
    double jc = p.j, hc = p.h;
    if (corrected_coefficients) {
        const double f = 1.0 - 2.0 * flip_p;
        if (std::abs(f) < kSingularTol) {
            std::vector<int> all(static_cast<size_t>(p.n));
            for (int q = 1; q <= p.n; ++q) all[static_cast<size_t>(q - 1)] = q;
            throw SingularOmegaError(all);
        }
        jc = p.j / (f * f);
        hc = p.h / f;
    }
    std::vector<std::vector<FrameTerm>> groups(2);
    for (int q = 1; q <= p.n; ++q) {
        const std::uint64_t bond = (std::uint64_t{1} << (q - 1)) | (std::uint64_t{1} << (q % p.n));
        groups[0].push_back({jc, bond, false});
        groups[1].push_back({hc, std::uint64_t{1} << (q - 1), false});
    }
    return groups;
}

// Variance of histogram means for the bit-flip corrected transverse-model
// Hamiltonian at equal flip probability, for the three measurement methods.
inline VarianceBreakdown var_method(VarianceMethod method, const IsingParams& params,
                                    double flip_p, const StateVector& state, long shots,
                                    bool corrected_coefficients = true,
                                    QmConvention convention = QmConvention::flip_averaged) {
    if (state.n_qubits() != params.n) throw std::invalid_argument("state/params size mismatch");
    const auto groups = ti_measurement_groups(params, flip_p, corrected_coefficients);
    const ReadoutModel model = ReadoutModel::uniform(params.n, flip_p);
    return var_method_groups(method, groups, model, state, shots, convention);
}

// ---------------------------------------------------------------------------
// Pipeline simulation of the three methods (the Monte-Carlo cross-check).

namespace detail {

struct FrameSampler {
    std::vector<double> cdf_z;
    std::vector<double> cdf_x;

    explicit FrameSampler(const FrameValues& vals) {
        cdf_z.resize(vals.probs(false).size());
        cdf_x.resize(vals.probs(true).size());
        double az = 0.0, ax = 0.0;
        for (size_t i = 0; i < cdf_z.size(); ++i) {
            az += vals.probs(false)[i];
            cdf_z[i] = az;
        }
        for (size_t i = 0; i < cdf_x.size(); ++i) {
            ax += vals.probs(true)[i];
            cdf_x[i] = ax;
        }
    }

    std::uint64_t sample(bool x_frame, Rng& rng) const {
        const auto& cdf = x_frame ? cdf_x : cdf_z;
        const double u = rng.next_double() * cdf.back();
        std::uint64_t i = static_cast<std::uint64_t>(
            std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin());
        if (i >= cdf.size()) i = cdf.size() - 1;
        return i;
    }
};

} // namespace detail

// Method 2 measures the whole operator sum per shot, which requires
// projecting onto the eigenbasis of each flip realization H_alpha.  One
// eigendecomposition is cached per realization visited.
class M2RealizationSampler {
  public:
    M2RealizationSampler(std::vector<FrameTerm> terms, const ReadoutModel& model,
                         const StateVector& state)
        : terms_(std::move(terms)), model_(model), state_(state) {
        if (state.n_qubits() > 8)
            throw std::invalid_argument("method-2 simulation limited to 8 qubits");
    }

    double sample(Rng& rng) {
        // Draw one flip outcome per qubit: 0 keep, 1 records 0 as 1 (-1),
        // 2 records 1 as 0 (+1), 3 both (-letter).
        std::uint64_t code = 0;
        for (int q = 1; q <= state_.n_qubits(); ++q) {
            const double p0 = model_.p0(q), p1 = model_.p1(q);
            const int f0 = rng.bernoulli(p0) ? 1 : 0;
            const int f1 = rng.bernoulli(p1) ? 1 : 0;
            code = code * 4 + static_cast<std::uint64_t>(f0 + 2 * f1);
        }
        const Realization& r = realization(code);
        const double u = rng.next_double() * r.cdf.back();
        size_t i = static_cast<size_t>(std::upper_bound(r.cdf.begin(), r.cdf.end(), u) -
                                       r.cdf.begin());
        if (i >= r.eigenvalues.size()) i = r.eigenvalues.size() - 1;
        return r.eigenvalues[i];
    }

  private:
    struct Realization {
        std::vector<double> eigenvalues;
        std::vector<double> cdf; // Born weights of the prepared state
    };

    const Realization& realization(std::uint64_t code) {
        auto it = cache_.find(code);
        if (it != cache_.end()) return it->second;

        // Decode per-qubit outcomes (qubit n_qubits first in `code`).
        std::vector<int> outcome(static_cast<size_t>(state_.n_qubits()));
        std::uint64_t c = code;
        for (int q = state_.n_qubits(); q >= 1; --q) {
            outcome[static_cast<size_t>(q - 1)] = static_cast<int>(c % 4);
            c /= 4;
        }
        PauliTermSum realized;
        realized.n_qubits = state_.n_qubits();
        for (const auto& t : terms_) {
            double coeff = t.coeff;
            PauliString s = PauliString::identity(state_.n_qubits());
            for (int q : detail::mask_qubits(t.z_mask)) {
                switch (outcome[static_cast<size_t>(q - 1)]) {
                    case 0: s.set(q, t.x_frame ? Pauli::X : Pauli::Z); break;
                    case 1: coeff = -coeff; break;
                    case 2: break;
                    case 3: s.set(q, t.x_frame ? Pauli::X : Pauli::Z); coeff = -coeff; break;
                }
            }
            realized.terms.push_back({coeff, std::move(s)});
        }

        Eigen::MatrixXcd m = dense_matrix(realized);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(m);
        Realization r;
        const auto dim = static_cast<size_t>(solver.eigenvalues().size());
        r.eigenvalues.resize(dim);
        r.cdf.resize(dim);
        double acc = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            r.eigenvalues[i] = solver.eigenvalues()(static_cast<Eigen::Index>(i));
            cdouble amp{0.0, 0.0};
            for (std::uint64_t j = 0; j < state_.dim(); ++j)
                amp += std::conj(solver.eigenvectors()(static_cast<Eigen::Index>(j),
                                                       static_cast<Eigen::Index>(i))) *
                       state_[j];
            acc += std::norm(amp);
            r.cdf[i] = acc;
        }
        return cache_.emplace(code, std::move(r)).first->second;
    }

    std::vector<FrameTerm> terms_;
    ReadoutModel model_;
    StateVector state_;
    std::unordered_map<std::uint64_t, Realization> cache_;
};

// One simulated histogram mean of the grouped measurement; the sampled
// counterpart of var_method_groups.  For Method 2 pass a persistent sampler
// so eigendecompositions are reused across histograms.
inline double simulate_histogram_mean(VarianceMethod method,
                                      const std::vector<std::vector<FrameTerm>>& groups,
                                      const ReadoutModel& model, const StateVector& state,
                                      long shots, Rng& rng,
                                      M2RealizationSampler* m2_sampler = nullptr) {
    detail::FrameValues vals(state);
    detail::FrameSampler sampler(vals);
    const double inv_shots = 1.0 / static_cast<double>(shots);

    auto flip_bits = [&](std::uint64_t j) {
        std::uint64_t rec = j;
        for (int q = 1; q <= state.n_qubits(); ++q) {
            const bool bit = j >> (q - 1) & 1;
            if (rng.bernoulli(bit ? model.p1(q) : model.p0(q)))
                rec ^= std::uint64_t{1} << (q - 1);
        }
        return rec;
    };

    if (method == VarianceMethod::m1) {
        double mean = 0.0;
        for (const auto& g : groups)
            for (const auto& t : g) {
                double term_mean = 0.0;
                for (long s = 0; s < shots; ++s) {
                    const std::uint64_t rec = flip_bits(sampler.sample(t.x_frame, rng));
                    term_mean += (std::popcount(rec & t.z_mask) & 1) ? -1.0 : 1.0;
                }
                mean += t.coeff * term_mean * inv_shots;
            }
        return mean;
    }

    if (method == VarianceMethod::m3) {
        double mean = 0.0;
        for (const auto& g : groups) {
            if (g.empty()) continue;
            const bool frame = g.front().x_frame;
            double group_mean = 0.0;
            for (long s = 0; s < shots; ++s) {
                const std::uint64_t rec = flip_bits(sampler.sample(frame, rng));
                for (const auto& t : g)
                    group_mean += t.coeff * ((std::popcount(rec & t.z_mask) & 1) ? -1.0 : 1.0);
            }
            mean += group_mean * inv_shots;
        }
        return mean;
    }

    if (m2_sampler == nullptr) throw std::invalid_argument("method 2 needs a realization sampler");
    double mean = 0.0;
    for (long s = 0; s < shots; ++s) mean += m2_sampler->sample(rng);
    return mean * inv_shots;
}

} // namespace qem
