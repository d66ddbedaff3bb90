// argmax-bayes command line: fits tensor-product spline posteriors to noisy
// surface observations, builds credible sets for the mode and maximum, runs
// the two-stage refinement, and drives seeded Monte Carlo studies.

#include "argmax_bayes/config.hpp"
#include "argmax_bayes/experiments.hpp"
#include "argmax_bayes/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <mutex>
#include <string>
#include <vector>

namespace ab = argmax_bayes;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::vector<std::string> overrides;
    long seed = -1;
    int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "TOML or JSON config file");
    cmd->add_option("--out", args.out_dir, "output directory");
    cmd->add_option("--seed", args.seed, "master seed override");
    cmd->add_option("--threads", args.threads, "worker thread cap (0 = auto)");
    cmd->add_option("--set", args.overrides, "config override key=value (repeatable)");
}

ab::RunConfig resolve(const CommonArgs& args) {
    json merged = json::object();
    if (!args.config_path.empty()) merged = ab::load_config_file(args.config_path);
    merged = ab::apply_overrides(std::move(merged), args.overrides);
    if (args.seed >= 0) merged["seed"] = args.seed;
    if (args.threads > 0) merged["threads"] = args.threads;
    return ab::make_run_config(merged);
}

void write_resolved(const ab::RunConfig& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    ab::write_text(out_dir + "/resolved_config.json", cfg.resolved.dump(2) + "\n");
}

std::string fmt(double v) { return ab::format_double(v); }

ab::Dataset load_or_generate(const ab::RunConfig& cfg, long n, std::uint64_t noise_slot) {
    const ab::ExperimentSpec& spec = cfg.spec;
    if (!cfg.data_csv.empty()) {
        ab::CsvTable table = ab::read_csv(cfg.data_csv);
        if (table.header.size() < 3)
            throw ab::ConfigError("data_csv: expected columns x1,x2,y");
        ab::Dataset data;
        data.Y.resize(static_cast<long>(table.rows.size()));
        for (std::size_t i = 0; i < table.rows.size(); ++i) {
            ab::Point x(2);
            x << ab::parse_double(table.rows[i][0]), ab::parse_double(table.rows[i][1]);
            data.X.push_back(std::move(x));
            data.Y[static_cast<long>(i)] = ab::parse_double(table.rows[i][2]);
        }
        return data;
    }
    ab::Rng noise = ab::Rng::substream(spec.master_seed, ab::stream::id(0, noise_slot));
    auto f0 = [](const ab::Point& x) { return ab::f0_benchmark(x[0], x[1]); };
    if (spec.design == ab::ExperimentSpec::Design::Grid)
        return ab::generate_grid_data(spec.grid_per_axis(n), spec.sigma0, noise, f0,
                                      spec.midpoint_grid);
    ab::Rng design = ab::Rng::substream(spec.master_seed, ab::stream::id(0, ab::stream::iid_design));
    return ab::generate_iid_data(n, spec.sigma0, design, noise, f0);
}

json knots_json(const ab::TensorBasisSpec& basis) {
    json axes = json::array();
    for (const auto& kv : basis.axes()) {
        json axis;
        axis["order"] = kv.order();
        axis["interior"] = kv.interior();
        axes.push_back(std::move(axis));
    }
    return axes;
}

json sigma_json(const ab::SigmaMode& sigma) {
    json out;
    out["law"] = sigma.law == ab::SigmaLaw::Empirical ? "empirical" : "inverse_gamma";
    out["sigma2_hat"] = sigma.sigma2_hat;
    if (sigma.law == ab::SigmaLaw::InverseGamma) {
        out["shape"] = sigma.shape;
        out["scale"] = sigma.scale;
    }
    return out;
}

struct Stage1Fit {
    std::vector<int> J;
    ab::TensorBasisSpec basis;
    ab::CoefficientPosterior post;
};

Stage1Fit fit_stage1(const ab::RunConfig& cfg, const ab::Dataset& data) {
    const ab::ExperimentSpec& spec = cfg.spec;
    std::vector<int> J = spec.fix_j;
    if (J.empty()) {
        ab::JSelectOptions opt;
        opt.orders = spec.orders;
        opt.j_max = spec.j_max;
        opt.fix_sigma_at_reference = spec.fix_sigma_at_reference;
        opt.threads = spec.threads;
        J = ab::marginal_logpost_J(data.X, data.Y, opt).chosen().J;
    }
    std::vector<ab::KnotVector> axes;
    for (std::size_t k = 0; k < J.size(); ++k)
        axes.push_back(ab::make_uniform_knots(spec.orders[k], J[k] - spec.orders[k]));
    ab::TensorBasisSpec basis(std::move(axes));
    ab::CoefficientPosterior post =
        ab::fit(basis, data.X, data.Y, ab::GaussianCoeffPrior::identity(basis.total_size()));
    return {std::move(J), std::move(basis), std::move(post)};
}

int cmd_select_j(const CommonArgs& args) {
    ab::RunConfig cfg = resolve(args);
    write_resolved(cfg, args.out_dir);
    ab::Dataset data = load_or_generate(cfg, cfg.spec.n1, ab::stream::stage1_noise);

    ab::JSelectOptions opt;
    opt.orders = cfg.spec.orders;
    opt.j_max = cfg.spec.j_max;
    opt.fix_sigma_at_reference = cfg.spec.fix_sigma_at_reference;
    opt.threads = cfg.spec.threads;
    ab::JSelection sel = ab::marginal_logpost_J(data.X, data.Y, opt);

    std::vector<std::string> header;
    for (std::size_t k = 0; k < opt.orders.size(); ++k)
        header.push_back("j" + std::to_string(k + 1));
    header.push_back("logscore");
    ab::CsvWriter scores(args.out_dir + "/scores.csv", header);
    for (const auto& cand : sel.scores) {
        std::vector<std::string> row;
        for (int j : cand.J) row.push_back(std::to_string(j));
        row.push_back(fmt(cand.logscore));
        scores.row(row);
    }

    json chosen;
    chosen["J"] = sel.chosen().J;
    chosen["logscore"] = sel.chosen().logscore;
    chosen["sigma2_hat"] = sel.chosen().sigma2_hat;
    chosen["warnings"] = sel.warnings;
    ab::write_text(args.out_dir + "/chosen.json", chosen.dump(2) + "\n");
    std::cout << "select-j: chose (";
    for (std::size_t k = 0; k < sel.chosen().J.size(); ++k)
        std::cout << (k ? "," : "") << sel.chosen().J[k];
    std::cout << ")\n";
    return 0;
}

int cmd_fit(const CommonArgs& args) {
    ab::RunConfig cfg = resolve(args);
    write_resolved(cfg, args.out_dir);
    ab::Dataset data = load_or_generate(cfg, cfg.spec.n1, ab::stream::stage1_noise);
    Stage1Fit s1 = fit_stage1(cfg, data);

    json posterior;
    posterior["J"] = s1.J;
    posterior["knots"] = knots_json(s1.basis);
    posterior["mean"] = std::vector<double>(s1.post.mean.data(),
                                            s1.post.mean.data() + s1.post.mean.size());
    posterior["sigma_mode"] = sigma_json(s1.post.sigma);
    posterior["logdet"] = s1.post.precision->logdet();
    ab::write_text(args.out_dir + "/posterior.json", posterior.dump(2) + "\n");

    const int g = cfg.grid_eval;
    ab::GridEvaluator ge(s1.basis, ab::DerivOrder::zero(2),
                         {ab::uniform_grid(g), ab::uniform_grid(g)});
    Eigen::VectorXd values = ge.values(s1.post.mean);
    ab::CsvWriter csv(args.out_dir + "/grid_eval.csv", {"x1", "x2", "value"});
    for (long i = 0; i < g; ++i)
        for (long j = 0; j < g; ++j)
            csv.row({fmt(static_cast<double>(i) / (g - 1)), fmt(static_cast<double>(j) / (g - 1)),
                     fmt(values[i * g + j])});
    std::cout << "fit: J=(" << s1.J[0] << "," << s1.J[1] << ") sigma2_hat="
              << s1.post.sigma.sigma2_hat << "\n";
    return 0;
}

json rect_json(const ab::CredibleRect& rect) {
    json out;
    out["center"] = std::vector<double>(rect.center.data(), rect.center.data() + rect.center.size());
    out["half_widths"] = std::vector<double>(rect.half_widths.data(),
                                             rect.half_widths.data() + rect.half_widths.size());
    out["provenance"] = rect.provenance == ab::CredibleRect::Provenance::sample_envelope
                            ? "sample_envelope"
                            : "quantile_radius";
    out["clipped"] = rect.clipped;
    return out;
}

int cmd_credible(const CommonArgs& args) {
    ab::RunConfig cfg = resolve(args);
    write_resolved(cfg, args.out_dir);
    const ab::ExperimentSpec& spec = cfg.spec;
    ab::Dataset data = load_or_generate(cfg, spec.n1, ab::stream::stage1_noise);
    Stage1Fit s1 = fit_stage1(cfg, data);
    ab::SurfacePosterior sp(s1.basis, s1.post);

    const int m = spec.mode_grid > 0 ? spec.mode_grid
                                     : static_cast<int>(std::lround(std::sqrt(
                                           static_cast<double>(data.X.size()))));
    std::vector<int> res(2, m);
    ab::GridEvaluator ge(s1.basis, ab::DerivOrder::zero(2),
                         {ab::uniform_grid(m), ab::uniform_grid(m)});
    ab::ModeEstimate mode = ab::argmax_grid_values(ge.values(s1.post.mean), res);

    ab::MuMSamples samples = ab::induce_mu_M_samples(
        sp, spec.mu_samples, res, ab::Rng::derive_seed(spec.master_seed, ab::stream::id(0, ab::stream::stage1_paths)),
        spec.threads);
    ab::CsvWriter mu_csv(args.out_dir + "/mu_samples.csv", {"mu_1", "mu_2", "M"});
    for (long s = 0; s < samples.mu.rows(); ++s)
        mu_csv.row({fmt(samples.mu(s, 0)), fmt(samples.mu(s, 1)), fmt(samples.M[s])});

    ab::CredibleRect rect = ab::envelope_rect(samples.mu, mode.mu, spec.rho_n,
                                              Eigen::VectorXd::Constant(2, spec.floor_hw));
    ab::write_text(args.out_dir + "/rect.json", rect_json(rect).dump(2) + "\n");

    std::vector<int> ares(2, spec.argmax_grid);
    json radii = json::array();
    std::vector<ab::DerivOrder> orders = {ab::DerivOrder::zero(2), ab::DerivOrder::axis(2, 0),
                                          ab::DerivOrder::axis(2, 1)};
    for (std::size_t i = 0; i < orders.size(); ++i) {
        ab::BandRadius b = ab::band_radius(sp, orders[i], spec.gamma, ares, cfg.band_count,
                                           ab::Rng::derive_seed(spec.master_seed, ab::stream::id(0, 8 + i)),
                                           spec.threads);
        json jb;
        jb["r"] = b.r.r;
        jb["gamma"] = b.gamma;
        jb["radius"] = b.radius;
        jb["sample_count"] = b.sample_count;
        radii.push_back(std::move(jb));
    }
    ab::write_text(args.out_dir + "/band_radii.json", radii.dump(2) + "\n");
    std::cout << "credible: mode=(" << mode.mu[0] << "," << mode.mu[1] << ") half_widths=("
              << rect.half_widths[0] << "," << rect.half_widths[1] << ")\n";
    return 0;
}

int cmd_two_stage(const CommonArgs& args) {
    ab::RunConfig cfg = resolve(args);
    write_resolved(cfg, args.out_dir);
    ab::TwoStageArtifacts art;
    ab::RunRecord rec = ab::run_two_stage_bayes(cfg.spec, 0, &art);

    ab::CsvWriter mu_csv(args.out_dir + "/mu_samples.csv", {"mu_1", "mu_2", "M"});
    for (long s = 0; s < art.stage1_samples.mu.rows(); ++s)
        mu_csv.row({fmt(art.stage1_samples.mu(s, 0)), fmt(art.stage1_samples.mu(s, 1)),
                    fmt(art.stage1_samples.M[s])});
    ab::write_text(args.out_dir + "/rect.json", rect_json(art.rect).dump(2) + "\n");

    json post2;
    post2["monomials"] = art.posterior.spec.monomials;
    post2["mean"] = std::vector<double>(art.posterior.mean.data(),
                                        art.posterior.mean.data() + art.posterior.mean.size());
    post2["sigma_mode"] = sigma_json(art.posterior.sigma);
    post2["sigma2_stage2"] = art.posterior.sigma2_stage2;
    post2["sigma1_sq"] = art.sigma1_sq;
    post2["delta"] = std::vector<double>(art.posterior.delta.data(),
                                         art.posterior.delta.data() + art.posterior.delta.size());
    ab::write_text(args.out_dir + "/stage2_posterior.json", post2.dump(2) + "\n");

    ab::CsvWriter s2_csv(args.out_dir + "/stage2_samples.csv",
                         {"mu_1", "mu_2", "M", "hessian_ok", "clipped", "degenerate"});
    for (std::size_t s = 0; s < art.stage2_samples.solves.size(); ++s) {
        const ab::ModeSolve& solve = art.stage2_samples.solves[s];
        s2_csv.row({fmt(art.stage2_samples.mu(static_cast<long>(s), 0)),
                    fmt(art.stage2_samples.mu(static_cast<long>(s), 1)),
                    fmt(art.stage2_samples.M[static_cast<long>(s)]),
                    solve.hessian_ok ? "1" : "0", solve.clipped ? "1" : "0",
                    solve.degenerate ? "1" : "0"});
    }

    json mode;
    mode["mu_hat"] = {rec.mu_hat[0], rec.mu_hat[1]};
    mode["M_hat"] = rec.M_hat;
    mode["err_mu"] = rec.err_mu;
    mode["err_M"] = rec.err_M;
    mode["J"] = rec.j_chosen;
    mode["delta"] = {rec.delta_used[0], rec.delta_used[1]};
    mode["sigma2_hat"] = rec.sigma2_hat;
    ab::write_text(args.out_dir + "/mode.json", mode.dump(2) + "\n");
    std::cout << "two-stage: mu_hat=(" << rec.mu_hat[0] << "," << rec.mu_hat[1]
              << ") M_hat=" << rec.M_hat << "\n";
    return 0;
}

int cmd_replicate(const CommonArgs& args) {
    ab::RunConfig cfg = resolve(args);
    write_resolved(cfg, args.out_dir);
    std::vector<ab::Method> methods;
    if (cfg.method == "all")
        methods = {ab::Method::SingleBayes, ab::Method::TwoStageBayes, ab::Method::TwoStageFreq};
    else if (cfg.method == "single_bayes")
        methods = {ab::Method::SingleBayes};
    else if (cfg.method == "two_stage_bayes")
        methods = {ab::Method::TwoStageBayes};
    else
        methods = {ab::Method::TwoStageFreq};

    std::cout << "replicate: " << cfg.spec.replications << " replications x " << methods.size()
              << " method(s)\n";
    std::mutex progress_mutex;
    const long step = std::max<long>(1, cfg.spec.replications * static_cast<long>(methods.size()) / 10);
    ab::MonteCarloResult result = ab::monte_carlo(cfg.spec, methods, [&](long done, long total) {
        if (done % step == 0 || done == total) {
            std::lock_guard<std::mutex> lock(progress_mutex);
            std::cout << "  " << done << "/" << total << " runs\n" << std::flush;
        }
    });

    ab::CsvWriter runs(args.out_dir + "/runs.csv",
                       {"method", "rep", "mu_hat_1", "mu_hat_2", "M_hat", "err_mu", "err_M",
                        "sigma2_hat", "j1", "j2", "delta_1", "delta_2", "seed", "flag"});
    for (const auto& rec : result.runs) {
        std::vector<std::string> row;
        row.push_back(ab::method_name(rec.method));
        row.push_back(std::to_string(rec.rep));
        row.push_back(fmt(rec.mu_hat[0]));
        row.push_back(fmt(rec.mu_hat[1]));
        row.push_back(fmt(rec.M_hat));
        row.push_back(fmt(rec.err_mu));
        row.push_back(fmt(rec.err_M));
        row.push_back(fmt(rec.sigma2_hat));
        row.push_back(rec.j_chosen.size() > 0 ? std::to_string(rec.j_chosen[0]) : "");
        row.push_back(rec.j_chosen.size() > 1 ? std::to_string(rec.j_chosen[1]) : "");
        row.push_back(rec.delta_used.size() > 0 ? fmt(rec.delta_used[0]) : "");
        row.push_back(rec.delta_used.size() > 1 ? fmt(rec.delta_used[1]) : "");
        row.push_back(std::to_string(rec.seed));
        row.push_back(rec.flag);
        runs.row(row);
    }

    json summary = json::array();
    ab::CsvWriter quant(args.out_dir + "/quantiles.csv",
                        {"method", "metric", "min", "q1", "median", "q3", "max", "mean"});
    for (const auto& s : result.summaries) {
        json js;
        js["method"] = ab::method_name(s.method);
        for (const char* metric : {"err_mu", "err_M"}) {
            const ab::SummaryStats& st = std::string(metric) == "err_mu" ? s.err_mu : s.err_M;
            js[metric] = {{"min", st.min}, {"q1", st.q1},   {"median", st.median},
                          {"q3", st.q3},   {"max", st.max}, {"mean", st.mean}};
            quant.row({ab::method_name(s.method), metric, fmt(st.min), fmt(st.q1), fmt(st.median),
                       fmt(st.q3), fmt(st.max), fmt(st.mean)});
        }
        summary.push_back(std::move(js));
        std::cout << "  " << ab::method_name(s.method) << ": median err_mu = " << s.err_mu.median
                  << ", median err_M = " << s.err_M.median << "\n";
    }
    ab::write_text(args.out_dir + "/summary.json", summary.dump(2) + "\n");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian mode and maximum estimation for noisy surfaces"};
    app.require_subcommand(1);

    CommonArgs args;
    CLI::App* select_j = app.add_subcommand("select-j", "marginal log-posterior J selection");
    CLI::App* fit = app.add_subcommand("fit", "stage-1 posterior fit and grid export");
    CLI::App* credible = app.add_subcommand("credible", "mode samples, band radii, credible rect");
    CLI::App* two_stage = app.add_subcommand("two-stage", "full two-stage pipeline");
    CLI::App* replicate = app.add_subcommand("replicate", "Monte Carlo study");
    for (CLI::App* cmd : {select_j, fit, credible, two_stage, replicate}) add_common(cmd, args);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (select_j->parsed()) return cmd_select_j(args);
        if (fit->parsed()) return cmd_fit(args);
        if (credible->parsed()) return cmd_credible(args);
        if (two_stage->parsed()) return cmd_two_stage(args);
        if (replicate->parsed()) return cmd_replicate(args);
    } catch (const ab::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const ab::NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << "\n";
        return 3;
    }
    return 2;
}
