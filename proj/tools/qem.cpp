// Command-line surface for the readout-noise simulation and mitigation
// library: synthetic calibration, energy histograms, convergence and
// random-state studies, variance breakdowns, and file-level mitigation.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "qem/experiment.hpp"
#include "qem/qem.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CLI::ValidationError("cannot open " + path);
    json j;
    in >> j;
    return j;
}

void write_file(const fs::path& dir, const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    std::ofstream out(dir / name, std::ios::binary);
    out << content;
    std::cout << "wrote " << (dir / name).string() << "\n";
}

void write_json(const fs::path& dir, const std::string& name, const json& j) {
    write_file(dir, name, j.dump(2) + "\n");
}

qem::ReadoutModel load_model(const std::string& path) {
    qem::ReadoutModel model;
    from_json(load_json(path), model);
    return model;
}

template <typename T>
void maybe(const json& j, const char* key, T& value) {
    if (j.contains(key)) value = j.at(key).get<T>();
}

qem::IsingParams ising_from(const json& j, qem::IsingParams params) {
    maybe(j, "n", params.n);
    maybe(j, "j", params.j);
    maybe(j, "h", params.h);
    return params;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"classical bit-flip readout noise: simulation, prediction, mitigation"};
    app.require_subcommand(1);
    app.set_help_flag("--help", "print help"); // -h is taken by the field strength

    std::uint64_t seed = 1;
    std::string out_dir = "out";
    std::string config_path;
    app.add_option("--seed", seed, "master seed; identical configs reproduce identical outputs");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--config", config_path, "JSON config; flags override its fields");

    // Config file fields are defaults; command-line flags win.  The file is
    // read before CLI11 parses so option defaults can come from it.
    json cfg = json::object();
    for (int i = 1; i < argc - 1; ++i)
        if (std::string(argv[i]) == "--config") cfg = load_json(argv[i + 1]);
    maybe(cfg, "seed", seed);
    maybe(cfg, "out", out_dir);

    // --- calibrate ---
    auto* cal = app.add_subcommand("calibrate", "synthetic flip-probability calibration");
    std::string cal_model_path;
    long s_cal = 8192;
    int cal_rounds = 10;
    maybe(cfg, "s_cal", s_cal);
    maybe(cfg, "rounds", cal_rounds);
    cal->add_option("--model", cal_model_path, "true readout model JSON")->required();
    cal->add_option("--s-cal", s_cal, "shots per calibration round");
    cal->add_option("--rounds", cal_rounds, "number of rounds");

    // --- histogram ---
    auto* hist = app.add_subcommand("histogram", "noisy energy histograms with overlays");
    std::string hist_model = "li";
    qem::HistogramConfig hist_cfg;
    maybe(cfg, "model", hist_model);
    hist_cfg.params = ising_from(cfg, hist_cfg.params);
    maybe(cfg, "p", hist_cfg.flip_p);
    maybe(cfg, "shots", hist_cfg.shots);
    maybe(cfg, "n_hist", hist_cfg.n_hist);
    hist->add_option("--model", hist_model, "li or ti")->check(CLI::IsMember({"li", "ti"}));
    hist->add_option("--n", hist_cfg.params.n, "ring size");
    hist->add_option("--j", hist_cfg.params.j, "coupling");
    hist->add_option("--h", hist_cfg.params.h, "field");
    hist->add_option("--p", hist_cfg.flip_p, "flip probability");
    hist->add_option("--shots", hist_cfg.shots, "shots per histogram");
    hist->add_option("--n-hist", hist_cfg.n_hist, "number of histograms");

    // --- convergence ---
    auto* conv = app.add_subcommand("convergence", "mitigated relative error vs shots");
    qem::ConvergenceConfig conv_cfg;
    maybe(cfg, "states", conv_cfg.n_states);
    maybe(cfg, "q_list", conv_cfg.q_list);
    maybe(cfg, "shot_list", conv_cfg.shot_list);
    maybe(cfg, "p_min", conv_cfg.p_min);
    maybe(cfg, "p_max", conv_cfg.p_max);
    conv->add_option("--states", conv_cfg.n_states, "random states per operator size");
    conv->add_option("--q", conv_cfg.q_list, "operator sizes");
    conv->add_option("--shots", conv_cfg.shot_list, "shot counts");

    // --- random-study ---
    auto* study = app.add_subcommand("random-study", "absolute error study on random circuits");
    int study_qubits = 1;
    int study_states = 512;
    std::string study_model_path;
    bool study_calibrated = false;
    std::vector<long> study_shots;
    maybe(cfg, "qubits", study_qubits);
    maybe(cfg, "states", study_states);
    maybe(cfg, "calibrated", study_calibrated);
    maybe(cfg, "shot_list", study_shots);
    study->add_option("--qubits", study_qubits, "1 or 2")->check(CLI::Range(1, 2));
    study->add_option("--states", study_states, "number of random states");
    study->add_option("--model", study_model_path, "readout model JSON")->required();
    study->add_option("--shots", study_shots, "shot counts");
    study->add_flag("--calibrated", study_calibrated,
                    "mitigate with synthetically calibrated probabilities");

    // --- variance ---
    auto* var = app.add_subcommand("variance", "histogram-mean variance contributions");
    std::string var_method_name = "all";
    qem::VarianceStudyConfig var_cfg;
    var_cfg.params = ising_from(cfg, var_cfg.params);
    maybe(cfg, "p", var_cfg.flip_p);
    maybe(cfg, "mc_histograms", var_cfg.mc_histograms);
    maybe(cfg, "mc_shots", var_cfg.mc_shots);
    var->add_option("--method", var_method_name, "m1, m2, m3 or all")
        ->check(CLI::IsMember({"m1", "m2", "m3", "all"}));
    var->add_option("--n", var_cfg.params.n, "ring size");
    var->add_option("--j", var_cfg.params.j, "coupling");
    var->add_option("--h", var_cfg.params.h, "field");
    var->add_option("--p", var_cfg.flip_p, "flip probability");
    var->add_option("--mc-histograms", var_cfg.mc_histograms, "Monte-Carlo repetitions");

    // --- mitigate ---
    auto* mit = app.add_subcommand("mitigate", "correct measured counts from files");
    std::string mit_counts_path, mit_model_path;
    std::vector<std::string> mit_targets;
    mit->add_option("--counts", mit_counts_path, "counts JSON")->required();
    mit->add_option("--model", mit_model_path, "readout model JSON")->required();
    mit->add_option("--target", mit_targets, "Pauli label over {I,Z}, e.g. IZZ")->required();

    // --- corrected-hamiltonian ---
    auto* pre = app.add_subcommand("corrected-hamiltonian",
                                   "emit the bit-flip corrected observable (pre-processing)");
    std::string pre_h_path, pre_model_path;
    pre->add_option("--hamiltonian", pre_h_path, "Pauli sum JSON")->required();
    pre->add_option("--model", pre_model_path, "readout model JSON")->required();

    for (CLI::App* sub : {cal, hist, conv, study, var, mit, pre})
        sub->set_help_flag("--help", "print help");

    CLI11_PARSE(app, argc, argv);
    const fs::path out(out_dir);

    try {
        if (*cal) {
            const qem::ReadoutModel model = load_model(cal_model_path);
            const qem::CalibrationRecord rec = qem::simulate_calibration(model, s_cal, cal_rounds, seed);
            json j = rec;
            write_json(out, "calibration.json", j);
        } else if (*hist) {
            hist_cfg.model = hist_model == "ti" ? qem::ModelKind::ti : qem::ModelKind::li;
            hist_cfg.seed = seed;
            const qem::HistogramResult result = qem::run_histogram_experiment(hist_cfg);
            write_file(out, "histogram_means.csv", qem::histogram_csv(result));
            write_json(out, "histogram_report.json", qem::histogram_report(hist_cfg, result));
        } else if (*conv) {
            conv_cfg.seed = seed;
            const qem::ConvergenceResult result = qem::run_convergence_experiment(conv_cfg);
            write_file(out, "convergence.csv", qem::convergence_csv(result));
            write_json(out, "convergence_report.json", qem::convergence_report(conv_cfg, result));
        } else if (*study) {
            qem::RandomStudyConfig scfg;
            scfg.n_qubits = study_qubits;
            scfg.n_states = study_states;
            scfg.model = load_model(study_model_path);
            scfg.calibrated = study_calibrated;
            scfg.seed = seed;
            if (!study_shots.empty()) scfg.shot_list = study_shots;
            const qem::RunReport report = qem::run_random_state_study(scfg);
            write_file(out, "random_study.csv", qem::random_study_csv(report));
            write_json(out, "random_study_report.json", qem::random_study_report(scfg, report));
        } else if (*var) {
            var_cfg.seed = seed;
            const qem::VarianceStudyResult result = qem::run_variance_contribution(var_cfg);
            std::string csv = qem::variance_csv(result);
            json report = qem::variance_report(var_cfg, result);
            if (var_method_name != "all") {
                // keep only the requested row / section
                std::istringstream lines(csv);
                std::string header, line, kept;
                std::getline(lines, header);
                kept = header + "\n";
                while (std::getline(lines, line))
                    if (line.rfind(var_method_name + ",", 0) == 0) kept += line + "\n";
                csv = kept;
                json filtered;
                for (auto& [key, value] : report.items())
                    if (key == var_method_name || (key != "m1" && key != "m2" && key != "m3"))
                        filtered[key] = value;
                report = filtered;
            }
            write_file(out, "variance.csv", csv);
            write_json(out, "variance_report.json", report);
        } else if (*mit) {
            qem::BitstringDistribution counts(1, qem::WeightKind::counts);
            from_json(load_json(mit_counts_path), counts);
            const qem::ReadoutModel model = load_model(mit_model_path);
            std::vector<qem::PauliString> targets;
            for (const auto& label : mit_targets) targets.push_back(qem::PauliString::from_label(label));
            write_json(out, "mitigation.json", qem::mitigation_report_json(counts, model, targets));
        } else if (*pre) {
            qem::PauliTermSum h;
            from_json(load_json(pre_h_path), h);
            const qem::ReadoutModel model = load_model(pre_model_path);
            write_json(out, "corrected_hamiltonian.json", qem::corrected_observable_json(h, model));
        }
    } catch (const qem::SingularOmegaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
