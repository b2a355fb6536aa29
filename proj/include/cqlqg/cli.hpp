#pragma once

#include <chrono>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "cqlqg/cost.hpp"
#include "cqlqg/model_io.hpp"
#include "cqlqg/optimality.hpp"
#include "cqlqg/swap.hpp"

// Command surface: verify | synthesize | cost | gradcheck | optimize.
// Each command prints a single JSON report to the output stream; warnings go
// to the error stream.  Exit codes: 0 success, 2 validation, 3 infeasible or
// nothing found, 4 instability, 5 numerical failure.

namespace cqlqg {

namespace cli_detail {

struct CommonFlags {
    std::string model_path;
    std::optional<uint64_t> seed_flag;
};

inline uint64_t resolve_seed(const CommonFlags& flags, const ModelFile& model) {
    if (flags.seed_flag) return *flags.seed_flag;
    if (model.seed) return *model.seed;
    if (const char* env = std::getenv("CQLQG_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw ValidationError("CQLQG_SEED: cannot parse '" + std::string(env) + "'");
        }
    }
    return 12345;
}

inline std::string default_output_path(const std::string& model_path, const char* suffix) {
    const size_t dot = model_path.rfind('.');
    const std::string stem =
        (dot == std::string::npos) ? model_path : model_path.substr(0, dot);
    return stem + suffix;
}

inline Json report_header(const char* command, const ModelFile& model) {
    Json rep;
    rep["command"] = command;
    rep["input_digest"] = model.digest;
    return rep;
}

inline Json pr_to_json(const PrReport& rep) {
    Json j;
    j["drift_residual"] = rep.drift_residual;
    j["output_residual"] = rep.output_residual;
    j["tol"] = rep.tol;
    j["pass"] = rep.pass;
    return j;
}

inline void emit(Json& rep, std::ostream& out,
                 std::chrono::steady_clock::time_point start) {
    const auto elapsed = std::chrono::duration<double, std::milli>(
                             std::chrono::steady_clock::now() - start)
                             .count();
    rep["wall_time_ms"] = elapsed;
    out << rep.dump(2) << "\n";
}

inline QuantumController luenberger_controller(const ModelFile& model,
                                               const LuenbergerGains& gains) {
    QuantumController ctrl;
    ctrl.b = gains.b;
    ctrl.e = gains.e;
    ctrl.d = model.d;
    ctrl.Theta2 = -model.plant.Theta1;
    ctrl.c = c_from_b(gains.b, model.plant, model.d, model.algebra);
    ctrl.a = luenberger_a(model.plant, gains, ctrl.c);
    ctrl.tildeJ2 = model.d * model.algebra.J2 * model.d.transpose();
    return ctrl;
}

inline int cmd_verify(const ModelFile& model, std::ostream& out,
                      std::chrono::steady_clock::time_point start) {
    Json rep = report_header("verify", model);
    const PrReport plant_rep = verify_pr(model.plant, model.algebra, model.tol.pr);
    rep["plant_pr"] = pr_to_json(plant_rep);
    bool all_pass = plant_rep.pass;
    if (model.controller) {
        const PrReport ctrl_rep = verify_pr(*model.controller, model.algebra, model.tol.pr);
        rep["controller_pr"] = pr_to_json(ctrl_rep);
        const ClosedLoopSystem loop =
            assemble_closed_loop(model.plant, *model.controller, model.algebra);
        const double pr_res = closed_loop_pr_residual(loop, model.algebra);
        const double scale = std::max(1.0, loop.cA.norm() * loop.Theta.norm());
        Json cl;
        cl["pr_residual"] = pr_res;
        cl["pass"] = pr_res <= model.tol.pr * scale;
        const StabilityReport stab = is_hurwitz(loop.cA, model.tol.hurwitz_margin);
        cl["spectral_abscissa"] = stab.abscissa;
        cl["hurwitz"] = stab.hurwitz;
        rep["closed_loop"] = cl;
        all_pass = all_pass && ctrl_rep.pass && pr_res <= model.tol.pr * scale;
    } else {
        rep["controller_pr"] = nullptr;
    }
    rep["pass"] = all_pass;
    emit(rep, out, start);
    return all_pass ? 0 : 2;
}

struct SynthesizeFlags {
    std::string mode = "search";
    int budget = 5000;
    double margin = 1e-6;
    std::string out_path;
};

inline int cmd_synthesize(const ModelFile& model, const CommonFlags& common,
                          const SynthesizeFlags& flags, std::ostream& out, std::ostream& err,
                          std::chrono::steady_clock::time_point start) {
    Json rep = report_header("synthesize", model);
    const uint64_t seed = resolve_seed(common, model);
    const GainConstraintData data = build_constraint_data(model.plant, model.algebra, model.d);

    LuenbergerGains gains;
    bool stabilizing_found = false;
    if (flags.mode == "search") {
        const auto found = search_stabilizing_gains(model.plant, model.algebra, model.d,
                                                    flags.budget, seed, flags.margin);
        if (found) {
            gains = *found;
            stabilizing_found = true;
        } else {
            err << "warning: no stabilizing gains found within budget "
                << flags.budget << "; emitting a feasible non-stabilizing solution\n";
            gains = solve_gain_constraint_particular(data);
        }
    } else if (flags.mode == "particular") {
        gains = solve_gain_constraint_particular(data);
    } else if (flags.mode == "around-b") {
        const Matrix anchor = model.controller ? model.controller->b : data.b0;
        gains = solve_gain_constraint_around_b(data, anchor);
    } else if (flags.mode == "around-e") {
        const Matrix anchor = model.controller ? model.controller->e : data.e0;
        gains = solve_gain_constraint_around_e(data, anchor);
    } else {
        throw ValidationError("--mode must be search|particular|around-b|around-e");
    }

    const QuantumController ctrl = luenberger_controller(model, gains);
    const ConstraintResidual res = constraint_residual(gains, data);
    const StabilityReport est = is_hurwitz(model.plant.A - gains.e * model.plant.C,
                                           model.tol.hurwitz_margin);
    const StabilityReport fbk = is_hurwitz(model.plant.A + model.plant.E * ctrl.c,
                                           model.tol.hurwitz_margin);

    const std::string out_path = flags.out_path.empty()
                                     ? default_output_path(common.model_path, ".controller.json")
                                     : flags.out_path;
    write_text_file(out_path, model_with_controller(model, ctrl).dump(2) + "\n");

    rep["mode"] = flags.mode;
    rep["seed"] = seed;
    rep["constraint_residual_norm"] = res.norm;
    rep["feasibility_tol"] = data.feasibility_tol();
    rep["estimator_abscissa"] = est.abscissa;
    rep["feedback_abscissa"] = fbk.abscissa;
    rep["stabilizing"] = est.hurwitz && fbk.hurwitz;
    rep["controller_pr"] = pr_to_json(verify_pr(ctrl, model.algebra, model.tol.pr));
    rep["output"] = out_path;
    emit(rep, out, start);
    if (flags.mode == "search" && !stabilizing_found) return 3;
    return 0;
}

inline int cmd_cost(const ModelFile& model, std::ostream& out,
                    std::chrono::steady_clock::time_point start) {
    if (!model.controller)
        throw ValidationError("controller: section required for the cost command");
    Json rep = report_header("cost", model);
    const ClosedLoopSystem loop =
        assemble_closed_loop(model.plant, *model.controller, model.algebra);
    const StabilityReport stab = is_hurwitz(loop.cA, model.tol.hurwitz_margin);
    rep["spectral_abscissa"] = stab.abscissa;
    if (!stab.hurwitz)
        throw NotHurwitz("closed loop spectral abscissa " + std::to_string(stab.abscissa));

    const Index n = model.n;
    Matrix s = Matrix::Identity(2 * n, 2 * n);
    s.topRightCorner(n, n) = -Matrix::Identity(n, n);
    Matrix s_inv = Matrix::Identity(2 * n, 2 * n);
    s_inv.topRightCorner(n, n) = Matrix::Identity(n, n);
    const CostEvaluations ev = three_way_cost(s * loop.cA * s_inv, s * loop.cB,
                                              loop.cC * s_inv, model.tol.rtol,
                                              model.tol.hurwitz_margin);

    rep["cost"] = {{"V", ev.value()},
                   {"from_state_weight", ev.from_state_weight},
                   {"from_noise_gain", ev.from_noise_gain},
                   {"from_hankelian", ev.from_hankelian},
                   {"max_rel_disagreement", ev.max_rel_disagreement}};
    rep["closed_loop_pr_residual"] = closed_loop_pr_residual(loop, model.algebra);
    emit(rep, out, start);
    return 0;
}

struct GradcheckFlags {
    int dirs = 20;
    double step = 0.0;  // 0 = auto (1e-6 * gain scale)
};

inline int cmd_gradcheck(const ModelFile& model, const CommonFlags& common,
                         const GradcheckFlags& flags, std::ostream& out, std::ostream& err,
                         std::chrono::steady_clock::time_point start) {
    if (flags.dirs < 0) throw ValidationError("--dirs must be nonnegative");
    Json rep = report_header("gradcheck", model);
    const uint64_t seed = resolve_seed(common, model);
    const LuenbergerGains gains = model.controller_gains();

    if (flags.step > 1e-2)
        err << "warning: step " << flags.step
            << " is large; finite differences will be dominated by curvature\n";

    // Random antisymmetric multiplier, fixed by the seed.
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Matrix lambda(model.n, model.n);
    for (Index i = 0; i < model.n; ++i)
        for (Index j = 0; j < model.n; ++j) lambda(i, j) = gauss(rng);
    lambda = antisymmetric_part(lambda);

    const GradCheckReport check = finite_difference_check(model.plant, gains, lambda,
                                                          model.algebra, model.d, flags.dirs,
                                                          flags.step, seed);
    rep["seed"] = seed;
    rep["directions"] = check.directions;
    rep["step"] = check.step;
    rep["max_rel_err_cost_gradient"] = check.max_rel_err_cost;
    rep["max_rel_err_lagrangian_gradient"] = check.max_rel_err_lagr;
    emit(rep, out, start);
    return 0;
}

struct OptimizeFlags {
    double tol = 1e-6;
    int max_iter = 500;
    double rho0 = 1.0;
    int budget = 5000;
    std::string out_path;
    std::string log_path;
};

inline int cmd_optimize(const ModelFile& model, const CommonFlags& common,
                        const OptimizeFlags& flags, std::ostream& out, std::ostream& err,
                        std::chrono::steady_clock::time_point start) {
    if (flags.tol <= 0.0) throw ValidationError("--tol must be positive");
    if (flags.max_iter < 0) throw ValidationError("--max-iter must be nonnegative");
    Json rep = report_header("optimize", model);
    const uint64_t seed = resolve_seed(common, model);

    LuenbergerGains init;
    if (model.controller) {
        init = model.controller_gains();
    } else {
        const auto found = search_stabilizing_gains(model.plant, model.algebra, model.d,
                                                    flags.budget, seed);
        if (!found)
            throw NotFound("no stabilizing initial gains found within budget " +
                           std::to_string(flags.budget));
        init = *found;
        err << "note: initial gains from randomized search (seed " << seed << ")\n";
    }

    StationaritySolveOptions opts;
    opts.tol = flags.tol;
    opts.max_iter = flags.max_iter;
    opts.rho0 = flags.rho0;
    opts.hurwitz_margin = model.tol.hurwitz_margin;
    const OptimalityState state =
        solve_stationarity(model.plant, model.algebra, model.d, init, opts);

    const std::string out_path = flags.out_path.empty()
                                     ? default_output_path(common.model_path, ".optimized.json")
                                     : flags.out_path;
    const std::string log_path = flags.log_path.empty()
                                     ? default_output_path(common.model_path, ".iterations.csv")
                                     : flags.log_path;
    write_text_file(out_path,
                    model_with_controller(model, luenberger_controller(model, state.gains))
                            .dump(2) +
                        "\n");
    write_text_file(log_path, iteration_log_csv(state.history));

    rep["seed"] = seed;
    rep["converged"] = state.converged;
    rep["iterations"] = state.iterations;
    rep["cost"] = state.cost;
    rep["lagrangian"] = state.lagrangian;
    rep["constraint_residual_norm"] = state.constraint_res.norm();
    rep["rb_norm"] = state.residuals.rb.norm();
    rep["re_norm"] = state.residuals.re.norm();
    rep["lambda"] = io_detail::matrix_to_json(state.lambda);
    rep["output"] = out_path;
    rep["log"] = log_path;
    emit(rep, out, start);
    return state.converged ? 0 : 3;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    using namespace cli_detail;
    CLI::App app{"Coherent quantum LQG controllers with Luenberger dynamics"};
    app.require_subcommand(1);

    CommonFlags common;
    uint64_t seed_value = 0;
    std::vector<CLI::Option*> seed_options;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("model", common.model_path, "model JSON file")
            ->required()
            ->check(CLI::ExistingFile);
        seed_options.push_back(sub->add_option("--seed", seed_value, "seed override"));
    };

    CLI::App* verify = app.add_subcommand("verify", "check physical realizability");
    add_common(verify);

    CLI::App* synth = app.add_subcommand("synthesize", "solve the gain constraint");
    add_common(synth);
    SynthesizeFlags sflags;
    synth->add_option("--mode", sflags.mode, "search|particular|around-b|around-e");
    synth->add_option("--budget", sflags.budget, "search budget");
    synth->add_option("--margin", sflags.margin, "stability margin for the search");
    synth->add_option("--out", sflags.out_path, "controller output file");

    CLI::App* cost = app.add_subcommand("cost", "evaluate the mean square cost");
    add_common(cost);

    CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient check");
    add_common(grad);
    GradcheckFlags gflags;
    grad->add_option("--dirs", gflags.dirs, "number of random directions");
    grad->add_option("--step", gflags.step, "finite-difference step (0 = auto)");

    CLI::App* opt = app.add_subcommand("optimize", "seek first-order stationarity");
    add_common(opt);
    OptimizeFlags oflags;
    opt->add_option("--tol", oflags.tol, "stationarity tolerance");
    opt->add_option("--max-iter", oflags.max_iter, "iteration budget");
    opt->add_option("--rho0", oflags.rho0, "initial penalty parameter");
    opt->add_option("--budget", oflags.budget, "search budget for initial gains");
    opt->add_option("--out", oflags.out_path, "optimized controller output file");
    opt->add_option("--log", oflags.log_path, "iteration log CSV file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return 0;
        }
        err << e.what() << "\n";
        return 2;
    }
    for (const CLI::Option* o : seed_options)
        if (o->count() > 0) common.seed_flag = seed_value;

    const auto start = std::chrono::steady_clock::now();
    try {
        const ModelFile model = ingest_model(common.model_path);
        for (const std::string& w : model.warnings) err << "warning: " << w << "\n";
        if (verify->parsed()) return cmd_verify(model, out, start);
        if (synth->parsed()) return cmd_synthesize(model, common, sflags, out, err, start);
        if (cost->parsed()) return cmd_cost(model, out, start);
        if (grad->parsed()) return cmd_gradcheck(model, common, gflags, out, err, start);
        if (opt->parsed()) return cmd_optimize(model, common, oflags, out, err, start);
        err << "no command\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return e.exit_code();
    } catch (const std::exception& e) {
        err << "internal error: " << e.what() << "\n";
        return 5;
    }
}

}  // namespace cqlqg
