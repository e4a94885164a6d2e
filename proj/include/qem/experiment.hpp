#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qem/diagonalize.hpp"
#include "qem/distribution.hpp"
#include "qem/ising.hpp"
#include "qem/mitigation.hpp"
#include "qem/readout.hpp"
#include "qem/rng.hpp"
#include "qem/state.hpp"
#include "qem/variance.hpp"

namespace qem {

// ---------------------------------------------------------------------------
// Power-law fit y = C s^{-alpha} by least squares on (log s, log y).

enum class FitRange { full, first4 };

struct PowerLawFit {
    double c = 0.0;
    double alpha = 0.0;
    double residual = 0.0; // rms residual in log space
};

inline PowerLawFit fit_power_law(const std::vector<std::pair<double, double>>& series,
                                 FitRange range = FitRange::full) {
    size_t count = series.size();
    if (range == FitRange::first4) count = std::min<size_t>(count, 4);
    if (count < 2) throw std::invalid_argument("power-law fit needs at least 2 points");

    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (size_t i = 0; i < count; ++i) {
        const auto& [s, y] = series[i];
        if (s <= 0.0 || y <= 0.0) throw std::invalid_argument("power-law fit needs positive data");
        const double x = std::log(s), ly = std::log(y);
        sx += x;
        sy += ly;
        sxx += x * x;
        sxy += x * ly;
    }
    const double n = static_cast<double>(count);
    const double denom = n * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("degenerate abscissa in power-law fit");
    const double slope = (n * sxy - sx * sy) / denom;
    const double intercept = (sy - slope * sx) / n;

    PowerLawFit fit;
    fit.alpha = -slope;
    fit.c = std::exp(intercept);
    double ss = 0.0;
    for (size_t i = 0; i < count; ++i) {
        const double r = std::log(series[i].second) - (intercept + slope * std::log(series[i].first));
        ss += r * r;
    }
    fit.residual = std::sqrt(ss / n);
    return fit;
}

inline void to_json(nlohmann::json& j, const PowerLawFit& f) {
    j = nlohmann::json{{"c", f.c}, {"alpha", f.alpha}, {"residual", f.residual}};
}

// ---------------------------------------------------------------------------
// Shared formatting: deterministic CSV rendering (fixed float format, LF line
// endings) so identical configs produce byte-identical outputs.

namespace detail {

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

} // namespace detail

// FNV-1a over a canonical JSON dump; stable provenance tag for a model file.
inline std::string model_hash(const nlohmann::json& j) {
    const std::string dump = j.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : dump) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------------------
// Energy histograms (the introductory experiment): measure the model ground
// state N_hist times with s shots each, Method-3 style (coupling group and
// field group from separate bit-string distributions), under equal-p readout
// flips.  Overlays: closed-form mean, closed-form variance of histogram means
// (bit-flip part from the bit-string-distribution variance, plus the
// flip-averaged quantum part), and a moment-matched Gaussian fit.

enum class ModelKind { li, ti };

struct HistogramConfig {
    ModelKind model = ModelKind::li;
    IsingParams params{4, -1.0, 2.0};
    double flip_p = 0.05;
    long shots = 2048;
    int n_hist = 512;
    std::uint64_t seed = 1;
};

struct HistogramResult {
    std::vector<double> means;
    double e0 = 0.0;
    double predicted_mean = 0.0;
    double predicted_var = 0.0; // variance of one histogram mean
    double predicted_var_bitflip = 0.0; // per-shot components
    double predicted_var_quantum = 0.0;
    double fit_mean = 0.0; // Gaussian fit by moments
    double fit_std = 0.0;
};

inline HistogramResult run_histogram_experiment(const HistogramConfig& cfg) {
    cfg.params.validate();
    if (cfg.n_hist < 1 || cfg.shots < 1) throw std::invalid_argument("n_hist and shots must be >= 1");
    const PauliTermSum h = cfg.model == ModelKind::li ? li_hamiltonian(cfg.params)
                                                      : ti_hamiltonian(cfg.params);
    auto [e0, ground] = ground_state(h);
    const auto groups = cfg.model == ModelKind::li
                            ? li_measurement_groups(cfg.params, cfg.flip_p, false)
                            : ti_measurement_groups(cfg.params, cfg.flip_p, false);
    const ReadoutModel model = ReadoutModel::uniform(cfg.params.n, cfg.flip_p);

    HistogramResult result;
    result.e0 = e0;
    result.predicted_mean = cfg.model == ModelKind::li ? li_noisy_mean(cfg.params, cfg.flip_p)
                                                       : ti_noisy_mean(cfg.params, cfg.flip_p);
    const VarianceBreakdown vb =
        var_method_groups(VarianceMethod::m3, groups, model, ground, cfg.shots);
    result.predicted_var = vb.var_total;
    result.predicted_var_bitflip = vb.var_bitflip;
    result.predicted_var_quantum = vb.var_quantum;

    Rng master(cfg.seed);
    result.means.reserve(static_cast<size_t>(cfg.n_hist));
    for (int i = 0; i < cfg.n_hist; ++i) {
        Rng task = master.split(static_cast<std::uint64_t>(i));
        result.means.push_back(
            simulate_histogram_mean(VarianceMethod::m3, groups, model, ground, cfg.shots, task));
    }

    double acc = 0.0;
    for (double m : result.means) acc += m;
    result.fit_mean = acc / cfg.n_hist;
    double ss = 0.0;
    for (double m : result.means) ss += (m - result.fit_mean) * (m - result.fit_mean);
    result.fit_std = cfg.n_hist > 1 ? std::sqrt(ss / (cfg.n_hist - 1)) : 0.0;
    return result;
}

inline std::string histogram_csv(const HistogramResult& r) {
    std::string out = "mean_energy\n";
    for (double m : r.means) out += detail::format_double(m) + "\n";
    return out;
}

inline nlohmann::json histogram_report(const HistogramConfig& cfg, const HistogramResult& r) {
    return nlohmann::json{
        {"model", cfg.model == ModelKind::li ? "li" : "ti"},
        {"n", cfg.params.n},
        {"j", cfg.params.j},
        {"h", cfg.params.h},
        {"p", cfg.flip_p},
        {"shots", cfg.shots},
        {"n_hist", cfg.n_hist},
        {"seed", cfg.seed},
        {"e0", r.e0},
        {"predicted_mean", r.predicted_mean},
        {"predicted_var", r.predicted_var},
        {"predicted_var_bitflip", r.predicted_var_bitflip},
        {"predicted_var_quantum", r.predicted_var_quantum},
        {"fit_mean", r.fit_mean},
        {"fit_std", r.fit_std},
    };
}

// ---------------------------------------------------------------------------
// Mitigated-expectation convergence on random states (relative error vs
// shots, power-law fitted).  States are Haar random on Q qubits, rejected
// until |<Z...Z>| >= min_abs_expectation to avoid dividing by small numbers;
// flip probabilities are drawn uniformly per state from [p_min, p_max].

struct ConvergenceConfig {
    std::vector<int> q_list{1, 2, 3, 4};
    int n_states = 512;
    std::vector<long> shot_list{64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384};
    double p_min = 0.05;
    double p_max = 0.25;
    double min_abs_expectation = 0.25;
    std::uint64_t seed = 1;
};

struct SeriesPoint {
    long shots = 0;
    double mean = 0.0;
    double stddev = 0.0;
};

struct ConvergenceResult {
    struct PerQ {
        int q = 0;
        std::vector<SeriesPoint> relative_error;
        PowerLawFit fit_full;
        PowerLawFit fit_first4;
    };
    std::vector<PerQ> per_q;
};

inline ConvergenceResult run_convergence_experiment(const ConvergenceConfig& cfg) {
    if (cfg.n_states < 1) throw std::invalid_argument("n_states must be >= 1");
    ConvergenceResult result;
    Rng master(cfg.seed);

    for (int q_count : cfg.q_list) {
        std::vector<double> err_acc(cfg.shot_list.size(), 0.0);
        std::vector<double> err_sq(cfg.shot_list.size(), 0.0);
        PauliString target = PauliString::from_z_mask(
            q_count, (std::uint64_t{1} << q_count) - 1);

        for (int i = 0; i < cfg.n_states; ++i) {
            Rng task = master.split(static_cast<std::uint64_t>(q_count) * 1000003u +
                                    static_cast<std::uint64_t>(i));
            StateVector s = StateVector::random(q_count, task);
            double truth = expectation(s, target);
            while (std::abs(truth) < cfg.min_abs_expectation) {
                s = StateVector::random(q_count, task);
                truth = expectation(s, target);
            }
            std::vector<QubitFlips> flips;
            for (int q = 0; q < q_count; ++q)
                flips.push_back({cfg.p_min + (cfg.p_max - cfg.p_min) * task.next_double(),
                                 cfg.p_min + (cfg.p_max - cfg.p_min) * task.next_double()});
            const ReadoutModel model(flips);

            for (size_t si = 0; si < cfg.shot_list.size(); ++si) {
                Rng shot_rng = task.split(1000u + si);
                BitstringDistribution counts = sample_bitstrings(s, cfg.shot_list[si], shot_rng);
                BitstringDistribution noisy = apply_readout_noise(counts, model, shot_rng);
                const auto report = mitigate_counts(noisy, {target}, model);
                const double rel = std::abs(report.entries[0].corrected - truth) / std::abs(truth);
                err_acc[si] += rel;
                err_sq[si] += rel * rel;
            }
        }

        ConvergenceResult::PerQ per_q;
        per_q.q = q_count;
        std::vector<std::pair<double, double>> series;
        for (size_t si = 0; si < cfg.shot_list.size(); ++si) {
            SeriesPoint pt;
            pt.shots = cfg.shot_list[si];
            pt.mean = err_acc[si] / cfg.n_states;
            const double var = err_sq[si] / cfg.n_states - pt.mean * pt.mean;
            pt.stddev = var > 0.0 ? std::sqrt(var) : 0.0;
            per_q.relative_error.push_back(pt);
            series.emplace_back(static_cast<double>(pt.shots), pt.mean);
        }
        per_q.fit_full = fit_power_law(series, FitRange::full);
        per_q.fit_first4 = fit_power_law(series, FitRange::first4);
        result.per_q.push_back(std::move(per_q));
    }
    return result;
}

inline std::string convergence_csv(const ConvergenceResult& r) {
    std::string out = "q,shots,mean_rel_error,std_rel_error\n";
    for (const auto& per_q : r.per_q)
        for (const auto& pt : per_q.relative_error)
            out += std::to_string(per_q.q) + "," + std::to_string(pt.shots) + "," +
                   detail::format_double(pt.mean) + "," + detail::format_double(pt.stddev) + "\n";
    return out;
}

inline nlohmann::json convergence_report(const ConvergenceConfig& cfg, const ConvergenceResult& r) {
    nlohmann::json j{{"n_states", cfg.n_states},
                     {"p_min", cfg.p_min},
                     {"p_max", cfg.p_max},
                     {"seed", cfg.seed},
                     {"fits", nlohmann::json::array()}};
    for (const auto& per_q : r.per_q)
        j["fits"].push_back({{"q", per_q.q},
                             {"full_range", per_q.fit_full},
                             {"first_4_points", per_q.fit_first4}});
    return j;
}

// ---------------------------------------------------------------------------
// Random-state absolute-error study: prepare random one- or two-qubit
// circuit states, measure Z (or Z (x) Z) with synthetic readout flips, and
// track the mean/std of the absolute error vs shots, corrected and
// uncorrected, with power-law fits over the full range and the lowest four
// shot counts.

struct RandomStudyConfig {
    int n_qubits = 1; // 1 or 2
    int n_states = 512;
    std::vector<long> shot_list{32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384, 32768};
    ReadoutModel model = ReadoutModel({{0.028, 0.062}});
    std::uint64_t seed = 1;
    // When set, flip probabilities fed to the mitigation come from a
    // synthetic calibration run instead of the true model.
    bool calibrated = false;
    long s_cal = 8192;
    int cal_rounds = 10;
};

struct RunReport {
    struct Point {
        long shots = 0;
        double mean_corrected = 0.0;
        double std_corrected = 0.0;
        double mean_uncorrected = 0.0;
        double std_uncorrected = 0.0;
    };
    std::vector<Point> points;
    PowerLawFit corrected_full;
    PowerLawFit corrected_first4;
    PowerLawFit uncorrected_full;
    PowerLawFit uncorrected_first4;
    bool uncorrected_plateau = false; // last three means within 10% relative
    ReadoutModel mitigation_model;    // what the correction actually used
};

inline RunReport run_random_state_study(const RandomStudyConfig& cfg) {
    if (cfg.n_qubits != 1 && cfg.n_qubits != 2)
        throw std::invalid_argument("random-state study covers 1 or 2 qubits");
    if (cfg.model.n_qubits() != cfg.n_qubits)
        throw std::invalid_argument("model size does not match circuit");

    Rng master(cfg.seed);
    ReadoutModel mitigation_model = cfg.model;
    if (cfg.calibrated) {
        const CalibrationRecord rec =
            simulate_calibration(cfg.model, cfg.s_cal, cfg.cal_rounds, master.split(0xCA1).next_u64());
        mitigation_model = rec.estimated_model();
    }

    const PauliString target = PauliString::from_z_mask(
        cfg.n_qubits, (std::uint64_t{1} << cfg.n_qubits) - 1);

    std::vector<double> corr_acc(cfg.shot_list.size(), 0.0), corr_sq(cfg.shot_list.size(), 0.0);
    std::vector<double> raw_acc(cfg.shot_list.size(), 0.0), raw_sq(cfg.shot_list.size(), 0.0);

    for (int i = 0; i < cfg.n_states; ++i) {
        Rng task = master.split(static_cast<std::uint64_t>(i) + 1);
        StateVector s(cfg.n_qubits);
        for (int q = 1; q <= cfg.n_qubits; ++q) {
            s.apply_rx(q, 2.0 * std::numbers::pi * task.next_double());
            s.apply_rz(q, 2.0 * std::numbers::pi * task.next_double());
        }
        if (cfg.n_qubits == 2) s.apply_cnot(1, 2);
        const double truth = expectation(s, target);

        for (size_t si = 0; si < cfg.shot_list.size(); ++si) {
            Rng shot_rng = task.split(1000u + si);
            BitstringDistribution counts = sample_bitstrings(s, cfg.shot_list[si], shot_rng);
            BitstringDistribution noisy = apply_readout_noise(counts, cfg.model, shot_rng);
            const double uncorrected = noisy.z_expectation(target.mask_of(Pauli::Z));
            const auto report = mitigate_counts(noisy, {target}, mitigation_model);
            const double e_raw = std::abs(uncorrected - truth);
            const double e_corr = std::abs(report.entries[0].corrected - truth);
            raw_acc[si] += e_raw;
            raw_sq[si] += e_raw * e_raw;
            corr_acc[si] += e_corr;
            corr_sq[si] += e_corr * e_corr;
        }
    }

    RunReport report;
    report.mitigation_model = mitigation_model;
    std::vector<std::pair<double, double>> corr_series, raw_series;
    for (size_t si = 0; si < cfg.shot_list.size(); ++si) {
        RunReport::Point pt;
        pt.shots = cfg.shot_list[si];
        pt.mean_corrected = corr_acc[si] / cfg.n_states;
        pt.mean_uncorrected = raw_acc[si] / cfg.n_states;
        const double vc = corr_sq[si] / cfg.n_states - pt.mean_corrected * pt.mean_corrected;
        const double vr = raw_sq[si] / cfg.n_states - pt.mean_uncorrected * pt.mean_uncorrected;
        pt.std_corrected = vc > 0.0 ? std::sqrt(vc) : 0.0;
        pt.std_uncorrected = vr > 0.0 ? std::sqrt(vr) : 0.0;
        report.points.push_back(pt);
        corr_series.emplace_back(static_cast<double>(pt.shots), pt.mean_corrected);
        raw_series.emplace_back(static_cast<double>(pt.shots), pt.mean_uncorrected);
    }
    report.corrected_full = fit_power_law(corr_series, FitRange::full);
    report.corrected_first4 = fit_power_law(corr_series, FitRange::first4);
    report.uncorrected_full = fit_power_law(raw_series, FitRange::full);
    report.uncorrected_first4 = fit_power_law(raw_series, FitRange::first4);

    if (report.points.size() >= 3) {
        const size_t n = report.points.size();
        double lo = report.points[n - 3].mean_uncorrected, hi = lo;
        for (size_t k = n - 3; k < n; ++k) {
            lo = std::min(lo, report.points[k].mean_uncorrected);
            hi = std::max(hi, report.points[k].mean_uncorrected);
        }
        report.uncorrected_plateau = lo > 0.0 && (hi - lo) / hi < 0.10;
    }
    return report;
}

inline std::string random_study_csv(const RunReport& r) {
    std::string out =
        "shots,mean_abs_error_corrected,std_abs_error_corrected,"
        "mean_abs_error_uncorrected,std_abs_error_uncorrected\n";
    for (const auto& pt : r.points)
        out += std::to_string(pt.shots) + "," + detail::format_double(pt.mean_corrected) + "," +
               detail::format_double(pt.std_corrected) + "," +
               detail::format_double(pt.mean_uncorrected) + "," +
               detail::format_double(pt.std_uncorrected) + "\n";
    return out;
}

inline nlohmann::json random_study_report(const RandomStudyConfig& cfg, const RunReport& r) {
    nlohmann::json jm = cfg.model;
    return nlohmann::json{
        {"n_qubits", cfg.n_qubits},
        {"n_states", cfg.n_states},
        {"seed", cfg.seed},
        {"calibrated", cfg.calibrated},
        {"model_hash", model_hash(jm)},
        {"corrected_fit", {{"full_range", r.corrected_full}, {"first_4_points", r.corrected_first4}}},
        {"uncorrected_fit",
         {{"full_range", r.uncorrected_full}, {"first_4_points", r.uncorrected_first4}}},
        {"uncorrected_plateau", r.uncorrected_plateau},
    };
}

// ---------------------------------------------------------------------------
// Variance contributions per measurement method (closed form + Monte-Carlo
// cross-check), evaluated for the bit-flip corrected transverse Hamiltonian
// on the true ground state.

struct VarianceStudyConfig {
    IsingParams params{4, -1.0, 2.0};
    double flip_p = 0.05;
    int mc_histograms = 10000;
    long mc_shots = 16;
    std::uint64_t seed = 1;
    QmConvention convention = QmConvention::flip_averaged;
};

struct VarianceStudyResult {
    VarianceBreakdown m1, m2, m3;
    double mc_total_m1 = 0.0; // sample variances scaled to the s = 1 normalization
    double mc_total_m2 = 0.0;
    double mc_total_m3 = 0.0;
};

inline VarianceStudyResult run_variance_contribution(const VarianceStudyConfig& cfg) {
    auto [e0, ground] = ground_state(ti_hamiltonian(cfg.params));
    const ReadoutModel model = ReadoutModel::uniform(cfg.params.n, cfg.flip_p);
    const auto groups = ti_measurement_groups(cfg.params, cfg.flip_p, true);
    std::vector<FrameTerm> flat;
    for (const auto& g : groups) flat.insert(flat.end(), g.begin(), g.end());

    VarianceStudyResult result;
    result.m1 = var_method(VarianceMethod::m1, cfg.params, cfg.flip_p, ground, 1, true, cfg.convention);
    result.m2 = var_method(VarianceMethod::m2, cfg.params, cfg.flip_p, ground, 1, true, cfg.convention);
    result.m3 = var_method(VarianceMethod::m3, cfg.params, cfg.flip_p, ground, 1, true, cfg.convention);

    Rng master(cfg.seed);
    auto mc_total = [&](VarianceMethod method, std::uint64_t stream) {
        Rng rng = master.split(stream);
        M2RealizationSampler m2s(flat, model, ground);
        double acc = 0.0, acc2 = 0.0;
        for (int i = 0; i < cfg.mc_histograms; ++i) {
            const double v =
                simulate_histogram_mean(method, groups, model, ground, cfg.mc_shots, rng,
                                        method == VarianceMethod::m2 ? &m2s : nullptr);
            acc += v;
            acc2 += v * v;
        }
        const double mean = acc / cfg.mc_histograms;
        // variance of the s-shot mean, rescaled to the s = 1 normalization
        return (acc2 / cfg.mc_histograms - mean * mean) * static_cast<double>(cfg.mc_shots);
    };
    result.mc_total_m1 = mc_total(VarianceMethod::m1, 11);
    result.mc_total_m2 = mc_total(VarianceMethod::m2, 12);
    result.mc_total_m3 = mc_total(VarianceMethod::m3, 13);
    return result;
}

inline std::string variance_csv(const VarianceStudyResult& r) {
    std::string out = "method,var_bitflip,var_quantum,var_total,mc_total\n";
    const VarianceBreakdown* breakdowns[3] = {&r.m1, &r.m2, &r.m3};
    const double mc[3] = {r.mc_total_m1, r.mc_total_m2, r.mc_total_m3};
    for (int i = 0; i < 3; ++i)
        out += "m" + std::to_string(i + 1) + "," + detail::format_double(breakdowns[i]->var_bitflip) +
               "," + detail::format_double(breakdowns[i]->var_quantum) + "," +
               detail::format_double(breakdowns[i]->var_total) + "," + detail::format_double(mc[i]) +
               "\n";
    return out;
}

inline nlohmann::json variance_report(const VarianceStudyConfig& cfg,
                                      const VarianceStudyResult& r) {
    auto one = [](const VarianceBreakdown& b, double mc) {
        return nlohmann::json{{"var_bitflip", b.var_bitflip},
                              {"var_quantum", b.var_quantum},
                              {"var_total", b.var_total},
                              {"mc_total", mc}};
    };
    return nlohmann::json{{"n", cfg.params.n},
                          {"j", cfg.params.j},
                          {"h", cfg.params.h},
                          {"p", cfg.flip_p},
                          {"seed", cfg.seed},
                          {"m1", one(r.m1, r.mc_total_m1)},
                          {"m2", one(r.m2, r.mc_total_m2)},
                          {"m3", one(r.m3, r.mc_total_m3)}};
}

// ---------------------------------------------------------------------------
// Post-processing entry point for measured data on disk: corrected values
// plus the noisy ones and the omega conditioning diagnostics.

inline nlohmann::json mitigation_report_json(const BitstringDistribution& counts,
                                             const ReadoutModel& model,
                                             const std::vector<PauliString>& targets) {
    const CountsMitigationReport report = mitigate_counts(counts, targets, model);
    nlohmann::json jm = model;
    nlohmann::json j{{"model_hash", model_hash(jm)},
                     {"omega_inversions", report.omega_inversions},
                     {"targets", nlohmann::json::array()}};
    for (const auto& e : report.entries)
        j["targets"].push_back({{"pauli", e.target.label()},
                                {"noisy", e.noisy},
                                {"corrected", e.corrected},
                                {"omega_condition", e.omega_condition}});
    return j;
}

// Pre-processing entry point: the bit-flip corrected observable, serialized
// like an ordinary Pauli sum plus provenance.
inline nlohmann::json corrected_observable_json(const PauliTermSum& h, const ReadoutModel& model) {
    const CorrectedObservable corr = corrected_observable(h, model);
    nlohmann::json j = corr.observable;
    nlohmann::json jm = model;
    j["omega_applied"] = true;
    j["model_hash"] = model_hash(jm);
    j["omega_inversions"] = corr.omega_inversions;
    return j;
}

} // namespace qem
