// Command-line front end: one subcommand per pipeline.

#include "dyntun/errors.hpp"
#include "dyntun/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Overrides {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> workers;
    std::optional<std::int64_t> stride;
    bool paper_scale = false;
};

void add_common(CLI::App* sub, Overrides& o) {
    sub->add_option("--config", o.config, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--stride", o.stride, "histogram sampling stride in kicks")->check(CLI::PositiveNumber);
    sub->add_flag("--paper-scale", o.paper_scale, "1e4 rotors x 5e4 kicks (slow)");
}

int execute(dyntun::Mode mode, const Overrides& o) {
    using namespace dyntun;
    RunConfig c = load_config(o.config, mode);
    if (o.seed) c.seed = c.ensemble.seed = *o.seed;
    if (o.out) c.output = *o.out;
    if (o.workers) c.workers = *o.workers;
    if (o.stride) c.stride = *o.stride;
    if (o.paper_scale || c.paper_scale) apply_paper_scale(c);
    c.validate();
    const auto art = run(c);
    for (const auto& f : art.files) std::cout << (art.directory / f).string() << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dynamical tunnelling of quantum accelerator modes"};
    app.set_version_flag("--version", dyntun::kVersion);
    app.require_subcommand(1);

    Overrides o;
    const std::pair<const char*, const char*> subs[] = {
        {"portrait", "phase portrait, fixed point and island area of the pseudo-classical map"},
        {"area", "island area with convergence check and occupancy grid"},
        {"evolve", "ensemble evolution, survival probability and decay fit"},
        {"sweep", "decay rates over a parameter family and the scaling fit"},
        {"fit", "refit a survival CSV or a rates CSV"},
        {"convert-units", "laboratory units to tau and eta"},
    };
    for (const auto& [name, help] : subs) add_common(app.add_subcommand(name, help), o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const auto* sub = app.get_subcommands().front();
        return execute(dyntun::parse_mode(sub->get_name()), o);
    } catch (const dyntun::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const dyntun::BasisOverflow& e) {
        std::cerr << "basis overflow: " << e.what() << '\n';
        return 3;
    } catch (const dyntun::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const dyntun::FitError& e) {
        std::cerr << "fit failure: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
