#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "qem/distribution.hpp"
#include "qem/pauli.hpp"
#include "qem/readout.hpp"
#include "qem/rng.hpp"

namespace qem {

// Raised when some support qubit has p0 + p1 = 1: the readout channel
// collapses the Bloch ball to a point and omega has a zero diagonal entry.
class SingularOmegaError : public std::runtime_error {
  public:
    explicit SingularOmegaError(std::vector<int> qubits)
        : std::runtime_error(message(qubits)), qubits_(std::move(qubits)) {}
    const std::vector<int>& qubits() const { return qubits_; }

  private:
    static std::string message(const std::vector<int>& qubits) {
        std::string m = "omega is singular: p0 + p1 = 1 on qubit(s)";
        for (int q : qubits) m += " " + std::to_string(q);
        return m;
    }
    std::vector<int> qubits_;
};

// Per-qubit weight of a noise-free letter in the noisy expectation:
// gamma(Z) = 1 - p0 - p1, gamma(1) = p1 - p0.
inline double gamma_coeff(Pauli letter, double p0, double p1) {
    if (p0 < 0.0 || p0 > 1.0 || p1 < 0.0 || p1 > 1.0)
        throw std::invalid_argument("flip probability outside [0,1]");
    switch (letter) {
        case Pauli::Z: return 1.0 - p0 - p1;
        case Pauli::I: return p1 - p0;
        default: throw std::invalid_argument("gamma defined for letters I and Z only");
    }
}

// (1 - 2p)^{#Z(op)}: the single scale factor relating noisy and true
// expectations when all flip probabilities equal p.
inline double equal_p_factor(const PauliString& op, double p) {
    int nz = 0;
    for (Pauli l : op.letters())
        if (l == Pauli::Z) ++nz;
    return std::pow(1.0 - 2.0 * p, nz);
}

// Response matrix over the lexicographically ordered operators {1,Z}^Q on a
// support of Q qubits: local index bit i corresponds to support[i], set means
// Z.  Row = noisy operator, column = noise-free operator;
//   omega(O|~O) = prod_q Gamma(O_q|~O_q)
// is nonzero only for O's Z set contained in ~O's, hence lower triangular.
// The inverse is computed by forward substitution on that structure.
class MitigationMatrix {
  public:
    MitigationMatrix(std::vector<int> support, const ReadoutModel& model)
        : support_(std::move(support)) {
        std::sort(support_.begin(), support_.end());
        if (support_.empty()) throw std::invalid_argument("empty support");
        if (support_.size() > 12) throw std::invalid_argument("support larger than 12 qubits");
        for (int q : support_)
            if (q < 1 || q > model.n_qubits()) throw std::out_of_range("support qubit out of range");
        if (std::adjacent_find(support_.begin(), support_.end()) != support_.end())
            throw std::invalid_argument("duplicate support qubit");

        const std::vector<int> bad = model.singular_qubits(support_);
        if (!bad.empty()) throw SingularOmegaError(bad);

        const std::uint64_t n = dim();
        omega_.assign(n * n, 0.0);
        for (std::uint64_t row = 0; row < n; ++row) {
            // Columns with Z only where the row has Z; the remaining row
            // qubits contribute gamma(1).
            for (std::uint64_t col = row;; col = (col - 1) & row) {
                double v = 1.0;
                for (size_t i = 0; i < support_.size(); ++i) {
                    if (!(row >> i & 1)) continue;
                    const int q = support_[i];
                    v *= (col >> i & 1) ? model.gamma_z(q) : model.gamma_i(q);
                }
                omega_[row * n + col] = v;
                if (col == 0) break;
            }
        }

        // Forward substitution, one identity column at a time.
        omega_inv_.assign(n * n, 0.0);
        for (std::uint64_t col = 0; col < n; ++col) {
            for (std::uint64_t row = col; row < n; ++row) {
                double rhs = row == col ? 1.0 : 0.0;
                for (std::uint64_t k = col; k < row; ++k)
                    rhs -= omega_[row * n + k] * omega_inv_[k * n + col];
                omega_inv_[row * n + col] = rhs / omega_[row * n + row];
            }
        }
    }

    const std::vector<int>& support() const { return support_; }
    std::uint64_t dim() const { return std::uint64_t{1} << support_.size(); }

    double omega(std::uint64_t noisy_index, std::uint64_t true_index) const {
        return omega_[noisy_index * dim() + true_index];
    }
    double omega_inv(std::uint64_t true_index, std::uint64_t noisy_index) const {
        return omega_inv_[true_index * dim() + noisy_index];
    }

    // Local operator index of a register-level Z mask (which must lie inside
    // the support).
    std::uint64_t index_of(std::uint64_t register_z_mask) const {
        std::uint64_t idx = 0;
        for (size_t i = 0; i < support_.size(); ++i) {
            const std::uint64_t bit = std::uint64_t{1} << (support_[i] - 1);
            if (register_z_mask & bit) {
                idx |= std::uint64_t{1} << i;
                register_z_mask &= ~bit;
            }
        }
        if (register_z_mask != 0) throw std::invalid_argument("operator not contained in support");
        return idx;
    }

    std::uint64_t register_mask_of(std::uint64_t local_index) const {
        std::uint64_t m = 0;
        for (size_t i = 0; i < support_.size(); ++i)
            if (local_index >> i & 1) m |= std::uint64_t{1} << (support_[i] - 1);
        return m;
    }

    // omega^{-1} applied to the full noisy-expectation vector.
    std::vector<double> apply_inverse(const std::vector<double>& noisy) const {
        if (noisy.size() != dim())
            throw std::invalid_argument("need a noisy expectation for every operator <= the target");
        std::vector<double> corrected(dim(), 0.0);
        const std::uint64_t n = dim();
        for (std::uint64_t row = 0; row < n; ++row)
            for (std::uint64_t col = 0; col <= row; ++col)
                corrected[row] += omega_inv_[row * n + col] * noisy[col];
        return corrected;
    }

    // 1-norm condition estimate from the explicit factors.
    double condition_1norm() const {
        return norm1(omega_) * norm1(omega_inv_);
    }

  private:
    double norm1(const std::vector<double>& m) const {
        const std::uint64_t n = dim();
        double best = 0.0;
        for (std::uint64_t col = 0; col < n; ++col) {
            double s = 0.0;
            for (std::uint64_t row = 0; row < n; ++row) s += std::abs(m[row * n + col]);
            best = std::max(best, s);
        }
        return best;
    }

    std::vector<int> support_;
    std::vector<double> omega_;
    std::vector<double> omega_inv_;
};

inline MitigationMatrix build_omega(std::vector<int> support, const ReadoutModel& model) {
    return MitigationMatrix(std::move(support), model);
}

inline std::vector<double> corrected_expectations(const std::vector<double>& noisy,
                                                  const MitigationMatrix& m) {
    return m.apply_inverse(noisy);
}

// Distinct term supports with subsets removed: correcting Z on a support also
// corrects every operator below it, so one inversion per maximal support
// suffices (N size-4 inversions for the ring-coupled Ising Hamiltonian).
inline std::vector<std::vector<int>> mitigation_supports(const PauliTermSum& h) {
    std::vector<std::vector<int>> supports;
    for (const auto& t : h.terms) {
        std::vector<int> s = t.string.support();
        if (s.empty()) continue;
        if (std::find(supports.begin(), supports.end(), s) == supports.end())
            supports.push_back(std::move(s));
    }
    std::vector<std::vector<int>> maximal;
    for (const auto& s : supports) {
        bool covered = false;
        for (const auto& other : supports) {
            if (other.size() <= s.size()) continue;
            if (std::includes(other.begin(), other.end(), s.begin(), s.end())) {
                covered = true;
                break;
            }
        }
        if (!covered) maximal.push_back(s);
    }
    return maximal;
}

// Operator whose noisy expectation equals the true expectation of the
// original observable; measuring it needs no extra circuits beyond the
// original term list when flips are symmetric, and the operators below each
// term otherwise.
struct CorrectedObservable {
    PauliTermSum observable; // expanded corrected terms, letters in original frames
    PauliTermSum original;   // provenance
    int omega_inversions = 0;
};

inline CorrectedObservable corrected_observable(const PauliTermSum& h, const ReadoutModel& model) {
    if (h.n_qubits != model.n_qubits()) throw std::invalid_argument("observable/model size mismatch");
    CorrectedObservable out;
    out.original = h;
    out.observable.n_qubits = h.n_qubits;

    const std::vector<std::vector<int>> plan = mitigation_supports(h);
    std::vector<MitigationMatrix> matrices;
    matrices.reserve(plan.size());
    for (const auto& s : plan) matrices.push_back(MitigationMatrix(s, model));
    out.omega_inversions = static_cast<int>(matrices.size());

    for (const auto& term : h.terms) {
        const std::vector<int> support = term.string.support();
        if (support.empty()) {
            out.observable.terms.push_back(term);
            continue;
        }

        // Symmetric flips: omega^{-1} is diagonal on this support, a single
        // rescaled copy of the term survives.
        bool symmetric = true;
        double scale = 1.0;
        for (int q : support) {
            if (model.gamma_i(q) != 0.0) {
                symmetric = false;
                break;
            }
            if (model.singular(q)) throw SingularOmegaError({q});
            scale /= model.gamma_z(q);
        }
        if (symmetric) {
            out.observable.terms.push_back({term.coeff * scale, term.string});
            continue;
        }

        // General case: expand the omega^{-1} row of this term over the
        // operators below it, mapped back through the term's own frame.
        const MitigationMatrix* m = nullptr;
        for (size_t i = 0; i < plan.size(); ++i) {
            if (std::includes(plan[i].begin(), plan[i].end(), support.begin(), support.end())) {
                m = &matrices[i];
                break;
            }
        }
        if (m == nullptr) throw std::logic_error("term support missing from mitigation plan");

        std::uint64_t support_mask = 0;
        for (int q : support) support_mask |= std::uint64_t{1} << (q - 1);
        const std::uint64_t row = m->index_of(support_mask);
        for (std::uint64_t col = 0; col <= row; ++col) {
            const double w = m->omega_inv(row, col);
            if (w == 0.0) continue;
            const std::uint64_t kept = m->register_mask_of(col);
            if ((kept & support_mask) != kept) continue; // outside this term's letters
            PauliString s = PauliString::identity(h.n_qubits);
            for (int q : support)
                if (kept >> (q - 1) & 1) s.set(q, term.string.at(q));
            out.observable.terms.push_back({term.coeff * w, std::move(s)});
        }
    }
    return out;
}

// Post-processing entry point: compute every noisy expectation below each
// target from the measured bit strings, then invert omega per support.
struct CountsMitigationReport {
    struct Entry {
        PauliString target;
        double noisy = 0.0;
        double corrected = 0.0;
        double omega_condition = 0.0;
    };
    std::vector<Entry> entries;
    int omega_inversions = 0;
};

inline CountsMitigationReport mitigate_counts(const BitstringDistribution& counts,
                                              const std::vector<PauliString>& targets,
                                              const ReadoutModel& model) {
    if (counts.total() <= 0.0) throw std::invalid_argument("empty counts");
    CountsMitigationReport report;

    PauliTermSum as_sum;
    as_sum.n_qubits = counts.n_qubits();
    for (const auto& t : targets) {
        if (t.size() != counts.n_qubits()) throw std::invalid_argument("target/register size mismatch");
        if (!t.diagonal()) throw std::invalid_argument("targets must be over {I,Z}");
        as_sum.terms.push_back({1.0, t});
    }
    const std::vector<std::vector<int>> plan = mitigation_supports(as_sum);
    std::vector<MitigationMatrix> matrices;
    for (const auto& s : plan) matrices.push_back(MitigationMatrix(s, model));
    report.omega_inversions = static_cast<int>(matrices.size());

    // Corrected vector per maximal support, from the full set of noisy
    // expectations below it.
    std::vector<std::vector<double>> corrected_per_support;
    for (const auto& m : matrices) {
        std::vector<double> noisy(m.dim());
        for (std::uint64_t idx = 0; idx < m.dim(); ++idx)
            noisy[idx] = counts.z_expectation(m.register_mask_of(idx));
        corrected_per_support.push_back(m.apply_inverse(noisy));
    }

    for (const auto& t : targets) {
        const std::vector<int> support = t.support();
        CountsMitigationReport::Entry entry;
        entry.target = t;
        entry.noisy = counts.z_expectation(t.mask_of(Pauli::Z));
        if (support.empty()) {
            entry.corrected = 1.0;
            entry.omega_condition = 1.0;
        } else {
            size_t which = plan.size();
            for (size_t i = 0; i < plan.size(); ++i) {
                if (std::includes(plan[i].begin(), plan[i].end(), support.begin(), support.end())) {
                    which = i;
                    break;
                }
            }
            if (which == plan.size()) throw std::logic_error("target support missing from plan");
            entry.corrected = corrected_per_support[which][matrices[which].index_of(t.mask_of(Pauli::Z))];
            entry.omega_condition = matrices[which].condition_1norm();
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

// response^{-1} applied to the observed block frequencies.  The inverse of a
// stochastic matrix need not be stochastic, so negative entries are reported,
// not clipped; expectation values can still be taken against the signed
// vector.  The 1-norm condition of the response is reported alongside.
struct BlockMitigationResult {
    BitstringDistribution corrected;
    bool has_negative_entries = false;
    double min_entry = 0.0;
    double condition = 0.0;
};

inline BlockMitigationResult mitigate_correlated_block(const BitstringDistribution& block_dist,
                                                       const CorrelatedBlockModel& block) {
    block.validate();
    const std::uint64_t n = block.dim();
    if (block_dist.dim() != n)
        throw std::invalid_argument("distribution does not match block size");
    const BitstringDistribution observed = block_dist.kind() == WeightKind::probability
                                               ? block_dist
                                               : block_dist.normalized();

    // Dense Gauss-Jordan with partial pivoting on [response | observed | I];
    // the response has no triangular structure to exploit, and the explicit
    // inverse feeds the condition estimate.
    std::vector<std::vector<double>> a = block.response;
    std::vector<std::vector<double>> aug(n, std::vector<double>(n + 1, 0.0));
    for (std::uint64_t i = 0; i < n; ++i) {
        aug[i][0] = observed[i];
        aug[i][1 + i] = 1.0;
    }
    for (std::uint64_t col = 0; col < n; ++col) {
        std::uint64_t pivot = col;
        for (std::uint64_t r = col + 1; r < n; ++r)
            if (std::abs(a[r][col]) > std::abs(a[pivot][col])) pivot = r;
        if (std::abs(a[pivot][col]) < 1e-14)
            throw std::domain_error("correlated response matrix is singular");
        std::swap(a[col], a[pivot]);
        std::swap(aug[col], aug[pivot]);
        const double inv_diag = 1.0 / a[col][col];
        for (std::uint64_t c = 0; c < n; ++c) a[col][c] *= inv_diag;
        for (std::uint64_t c = 0; c <= n; ++c) aug[col][c] *= inv_diag;
        for (std::uint64_t r = 0; r < n; ++r) {
            if (r == col || a[r][col] == 0.0) continue;
            const double f = a[r][col];
            for (std::uint64_t c = 0; c < n; ++c) a[r][c] -= f * a[col][c];
            for (std::uint64_t c = 0; c <= n; ++c) aug[r][c] -= f * aug[col][c];
        }
    }

    BlockMitigationResult result{BitstringDistribution(static_cast<int>(block.qubits.size()),
                                                       WeightKind::probability),
                                 false, 0.0, 0.0};
    for (std::uint64_t i = 0; i < n; ++i) {
        result.corrected[i] = aug[i][0];
        result.min_entry = std::min(result.min_entry, aug[i][0]);
    }
    result.has_negative_entries = result.min_entry < -1e-12;

    double norm_a = 0.0, norm_inv = 0.0;
    for (std::uint64_t c = 0; c < n; ++c) {
        double col_a = 0.0, col_inv = 0.0;
        for (std::uint64_t r = 0; r < n; ++r) {
            col_a += std::abs(block.response[r][c]);
            col_inv += std::abs(aug[r][1 + c]);
        }
        norm_a = std::max(norm_a, col_a);
        norm_inv = std::max(norm_inv, col_inv);
    }
    result.condition = norm_a * norm_inv;
    return result;
}

// Marginal of a register-level distribution on the block's qubits, in block
// bit order.
inline BitstringDistribution restrict_to_block(const BitstringDistribution& dist,
                                               const CorrelatedBlockModel& block) {
    BitstringDistribution out(static_cast<int>(block.qubits.size()), dist.kind());
    for (std::uint64_t idx = 0; idx < dist.dim(); ++idx) {
        if (dist[idx] == 0.0) continue;
        std::uint64_t b = 0;
        for (size_t i = 0; i < block.qubits.size(); ++i)
            if (idx >> (block.qubits[i] - 1) & 1) b |= std::uint64_t{1} << i;
        out[b] += dist[idx];
    }
    return out;
}

// One draw of the probabilistic mitigation protocol: term j is measured with
// probability |alpha_j| / A, and A * sign * (measured value) is an unbiased
// estimator of the corrected expectation.
struct ProbabilisticDraw {
    double scale = 0.0; // A = sum_j |alpha_j|
    int sign = +1;
    size_t term_index = 0;
    PauliTerm term;
};

inline ProbabilisticDraw probabilistic_mitigation_sample(const CorrectedObservable& corrected,
                                                         Rng& rng) {
    const double a = corrected.observable.coeff_l1();
    if (a <= 0.0) throw std::invalid_argument("all corrected coefficients are zero");
    const double u = rng.next_double() * a;
    double acc = 0.0;
    size_t j = corrected.observable.terms.size() - 1;
    for (size_t i = 0; i < corrected.observable.terms.size(); ++i) {
        acc += std::abs(corrected.observable.terms[i].coeff);
        if (u < acc) {
            j = i;
            break;
        }
    }
    const PauliTerm& t = corrected.observable.terms[j];
    return ProbabilisticDraw{a, t.coeff < 0.0 ? -1 : +1, j, t};
}

} // namespace qem
