// scalesplit: decompose | train | generate | evaluate | calibrate | synth

#include "scalesplit/error.hpp"
#include "scalesplit/kv.hpp"
#include "scalesplit/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

using namespace scalesplit;

namespace {

// Named flags and the config key each one overrides.
struct Override {
    const char* flag;
    const char* key;
    const char* help;
};

const Override kOverrides[] = {
    {"--source-train", "paths.source_train", "source training file"},
    {"--source-eval", "paths.source_eval", "source evaluation file"},
    {"--target-train", "paths.target_train", "target training file"},
    {"--target-eval", "paths.target_eval", "target evaluation file"},
    {"--altitude", "paths.altitude", "altitude map (WFLD)"},
    {"--wavelength-km", "separator.wavelength_km", "Fourier cutoff wavelength"},
    {"--blur-sigma-km", "separator.blur_sigma_km", "Gaussian blur width"},
    {"--cutoff-candidates", "cutoff.candidates_km", "comma list of candidate wavelengths"},
    {"--auto-cutoff", "cutoff.auto", "true/false: pick the cutoff with the classifier scan"},
    {"--bands", "decompose.bands_km", "comma list of band cutoffs (band mode)"},
    {"--input", "decompose.input", "file to decompose"},
    {"--norm", "norm.scheme", "spatial | per_cell"},
    {"--hidden", "model.hidden", "comma list of hidden widths"},
    {"--epochs", "train.epochs", "training epochs"},
    {"--learning-rate", "train.learning_rate", "SGD step"},
    {"--batch-size", "train.batch_size", "minibatch size"},
    {"--max-frames", "train.max_frames", "cap on training frames"},
    {"--members", "ensemble.members", "ensemble size"},
    {"--noise-scale", "ensemble.noise_scale", "inference noise scale a"},
    {"--ode-steps", "ensemble.ode_steps", "Euler steps"},
    {"--hist", "metrics.hist", "historical period START,END"},
    {"--fut", "metrics.fut", "future period START,END"},
    {"--ovm", "metrics.ovm", "auto | on | off"},
    {"--a-grid", "calibrate.a_grid", "comma list of noise scales"},
    {"--scenario", "synth.scenario", "shared_largescale | biased_source | future_shift"},
    {"--checkpoint", "run.checkpoint", "checkpoint path"},
    {"--method", "run.method", "field to evaluate"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Scale-separated downscaling and bias correction of gridded fields"};
    app.require_subcommand(1, 1);

    std::string config_path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> values;
    app.add_option("--config", config_path, "key=value config file");
    app.add_option("--seed", values["run.seed"], "global seed (u64)");
    app.add_option("--threads", values["run.threads"], "worker threads for member sampling");
    app.add_option("--out", values["run.out"], "output directory");
    app.add_option("--set", sets, "KEY=VALUE override, repeatable");
    for (const auto& o : kOverrides) app.add_option(o.flag, values[o.key], o.help);

    const std::pair<const char*, const char*> commands[] = {
        {"decompose", "split fields into low and high (or band) components"},
        {"train", "fit the flow-matching generator"},
        {"generate", "sample ensemble members for the source evaluation period"},
        {"evaluate", "score the ensemble, CDF-t and the source against the target"},
        {"calibrate", "rank histograms, spread-skill and noise-scale tuning"},
        {"synth", "write a synthetic scenario"},
    };
    for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_code(ErrorKind::Usage);
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        KeyValues overrides;
        for (const auto& s : sets) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) fail(ErrorKind::Usage, "--set expects KEY=VALUE, got '" + s + "'");
            overrides.set(std::string(trim(s.substr(0, eq))), std::string(trim(s.substr(eq + 1))));
        }
        for (const auto& [key, value] : values)
            if (!value.empty()) overrides.set(key, value);
        const auto cfg = load_run_config(config_path, overrides);
        run_command(command, cfg);
        std::cout << command << ": done, outputs in " << cfg.out << "\n";
        return 0;
    } catch (const Error& e) {
        std::cerr << "scalesplit " << command << ": " << kind_name(e.kind()) << " error: " << e.what() << "\n";
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "scalesplit " << command << ": internal error: " << e.what() << "\n";
        return exit_code(ErrorKind::Internal);
    }
}
