// Command-line surface for designing and analyzing rerandomized survey
// experiments: `design` draws a realization, `estimate` produces an
// inference report, `simulate` runs the replication engine, `frt` runs a
// conditional randomization test.
#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "resem/asymptotics.hpp"
#include "resem/balance.hpp"
#include "resem/design.hpp"
#include "resem/errors.hpp"
#include "resem/estimation.hpp"
#include "resem/io.hpp"
#include "resem/randomization_test.hpp"
#include "resem/simulation.hpp"

namespace {

using resem::BalanceCriteria;
using resem::CsvTable;
using resem::DomainError;
using resem::ObservedExperiment;

std::vector<std::string> split_names(const std::string& csv) {
  std::vector<std::string> out;
  std::string token;
  std::stringstream ss(csv);
  while (std::getline(ss, token, ',')) {
    const auto begin = token.find_first_not_of(" \t");
    const auto end = token.find_last_not_of(" \t");
    if (begin != std::string::npos) out.push_back(token.substr(begin, end - begin + 1));
  }
  return out;
}

Eigen::MatrixXd gather_block(const CsvTable& table, const std::vector<std::string>& names,
                             const std::vector<int>& rows, std::vector<long>* missing) {
  Eigen::MatrixXd block(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(names.size()));
  std::vector<int> cols;
  for (const auto& name : names) cols.push_back(table.require_column(name));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto cell = table.numeric(static_cast<std::size_t>(rows[r]), cols[c]);
      if (!cell.has_value()) {
        missing->push_back(rows[r] + 1);
        block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = 0.0;
      } else {
        block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *cell;
      }
    }
  return block;
}

void reject_missing(const std::vector<long>& rows, const std::string& what) {
  if (rows.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < rows.size() && i < 20; ++i)
    list += (i ? ", " : "") + std::to_string(rows[i]);
  if (rows.size() > 20) list += ", ...";
  throw DomainError("missing " + what + " (data rows " + list + ")");
}

struct ExperimentInputs {
  ObservedExperiment exp;
  BalanceCriteria criteria;
  resem::Realization realization;
};

ExperimentInputs load_experiment(const std::string& data_path,
                                 const std::string& design_path,
                                 const std::string& y_col,
                                 const std::vector<std::string>& w_cols,
                                 const std::vector<std::string>& x_cols,
                                 const std::vector<std::string>& e_cols,
                                 const std::vector<std::string>& c_cols) {
  const CsvTable table = resem::load_table(data_path);
  auto loaded = resem::realization_from_json(resem::read_text_file(design_path));
  const auto& realization = loaded.realization;
  if (static_cast<int>(table.rows.size()) != realization.population_size())
    throw DomainError("data file has " + std::to_string(table.rows.size()) +
                      " rows but the design covers " +
                      std::to_string(realization.population_size()) + " units");

  const std::vector<int> sampled = realization.sampled_indices();
  std::vector<long> missing;

  ExperimentInputs inputs;
  inputs.criteria = loaded.criteria;
  inputs.realization = realization;
  ObservedExperiment& exp = inputs.exp;
  exp.t = realization.t;

  const int y_idx = table.require_column(y_col);
  exp.y.resize(static_cast<Eigen::Index>(sampled.size()));
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    const auto cell = table.numeric(static_cast<std::size_t>(sampled[i]), y_idx);
    if (!cell.has_value()) {
      missing.push_back(sampled[i] + 1);
      exp.y(static_cast<Eigen::Index>(i)) = 0.0;
    } else {
      exp.y(static_cast<Eigen::Index>(i)) = *cell;
    }
  }
  reject_missing(missing, "outcomes on sampled rows");

  exp.w = gather_block(table, w_cols, sampled, &missing);
  exp.x = gather_block(table, x_cols, sampled, &missing);
  exp.e = gather_block(table, e_cols, sampled, &missing);
  exp.c = gather_block(table, c_cols, sampled, &missing);
  reject_missing(missing, "covariate values on sampled rows");

  // Population mean of the analysis covariates known for all units.
  std::vector<int> all_rows(table.rows.size());
  for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<int>(i);
  const Eigen::MatrixXd e_all = gather_block(table, e_cols, all_rows, &missing);
  reject_missing(missing, "population-wide analysis covariates");
  exp.e_population_mean = e_all.rows() > 0 ? Eigen::VectorXd(e_all.colwise().mean())
                                           : Eigen::VectorXd(0);

  exp.fractions = resem::DesignFractions::from_counts(
      realization.population_size(), realization.sample_size(), realization.treated_size());
  return inputs;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty() || out_path == "-")
    std::cout << text;
  else
    resem::write_text_file(out_path, text);
}

int run(int argc, char** argv) {
  CLI::App app{"Rerandomized survey experiments: design, estimation, "
               "replication and randomization tests"};
  app.require_subcommand(1);

  // ---- design ------------------------------------------------------------
  auto* design = app.add_subcommand("design", "Draw a rerandomized sampling and assignment");
  std::string d_covariates, d_w_cols, d_x_cols, d_out;
  int d_n = 0, d_n1 = 0;
  double d_p_s = 1.0, d_p_t = 1.0;
  double d_a_s = 0.0, d_a_t = 0.0;  // raw thresholds, advanced
  std::uint64_t d_seed = 0, d_stream = 0;
  long d_max_attempts = resem::kDefaultMaxAttempts;
  bool d_single_stage = false;
  design->add_option("--covariates", d_covariates, "CSV with covariate columns")->required();
  design->add_option("--w-cols", d_w_cols, "comma-separated sampling-stage columns");
  design->add_option("--x-cols", d_x_cols, "comma-separated assignment-stage columns");
  design->add_option("--n", d_n, "number of sampled units")->required();
  design->add_option("--n1", d_n1, "number of treated units")->required();
  design->add_option("--p-s", d_p_s, "sampling acceptance probability (default 1)");
  design->add_option("--p-t", d_p_t, "assignment acceptance probability (default 1)");
  design->add_option("--a-s", d_a_s, "raw sampling threshold (overrides --p-s)");
  design->add_option("--a-t", d_a_t, "raw assignment threshold (overrides --p-t)");
  design->add_option("--seed", d_seed, "master seed")->required();
  design->add_option("--stream", d_stream, "stream index (default 0)");
  design->add_option("--max-attempts", d_max_attempts, "rejection budget per stage");
  design->add_flag("--single-stage", d_single_stage,
                   "accept only jointly balanced (sampling, assignment) pairs");
  design->add_option("--out", d_out, "output path (default stdout)");

  // ---- estimate ----------------------------------------------------------
  auto* estimate = app.add_subcommand("estimate", "Point estimate and confidence interval");
  std::string e_data, e_design, e_y = "y", e_w_cols, e_x_cols, e_e_cols, e_c_cols, e_out;
  std::string e_adjust = "none", e_beta, e_gamma;
  double e_alpha = 0.05;
  bool e_sampling_unknown = false, e_assignment_unknown = false;
  int e_nu_draws = 1'000'000;
  std::uint64_t e_nu_seed = 0x6e75ULL;
  estimate->add_option("--data", e_data, "experiment CSV (all population rows)")->required();
  estimate->add_option("--design", e_design, "realization JSON from `design`")->required();
  estimate->add_option("--y-col", e_y, "outcome column (default y)");
  estimate->add_option("--w-cols", e_w_cols, "sampling-stage columns");
  estimate->add_option("--x-cols", e_x_cols, "assignment-stage columns");
  estimate->add_option("--e-cols", e_e_cols, "analysis columns known population-wide");
  estimate->add_option("--c-cols", e_c_cols, "analysis columns for sampled units");
  estimate->add_option("--alpha", e_alpha, "nominal level (default 0.05)");
  estimate->add_option("--adjust", e_adjust, "none | fixed | estimated");
  estimate->add_option("--beta", e_beta, "comma-separated coefficients for --adjust fixed");
  estimate->add_option("--gamma", e_gamma, "comma-separated coefficients for --adjust fixed");
  estimate->add_flag("--sampling-unknown", e_sampling_unknown,
                     "analyst lacks the sampling-stage design information");
  estimate->add_flag("--assignment-unknown", e_assignment_unknown,
                     "analyst lacks the assignment-stage design information");
  estimate->add_option("--nu-draws", e_nu_draws, "law Monte Carlo draws");
  estimate->add_option("--nu-seed", e_nu_seed, "law Monte Carlo seed");
  estimate->add_option("--out", e_out, "output path (default stdout)");

  // ---- simulate ----------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Replication study from a config");
  std::string s_config, s_out;
  simulate->add_option("--config", s_config, "simulation config JSON")->required();
  simulate->add_option("--out", s_out, "override the configured output path");

  // ---- frt ---------------------------------------------------------------
  auto* frt = app.add_subcommand("frt", "Conditional randomization test");
  std::string f_data, f_design, f_y = "y", f_w_cols, f_x_cols, f_e_cols, f_c_cols, f_out;
  std::string f_statistic = "dim";
  double f_null = 0.0, f_alpha = 0.05;
  long f_draws = 1000;
  std::uint64_t f_seed = 0, f_stream = 0;
  bool f_invert = false;
  frt->add_option("--data", f_data, "experiment CSV (all population rows)")->required();
  frt->add_option("--design", f_design, "realization JSON from `design`")->required();
  frt->add_option("--y-col", f_y, "outcome column (default y)");
  frt->add_option("--w-cols", f_w_cols, "sampling-stage columns");
  frt->add_option("--x-cols", f_x_cols, "assignment-stage columns (resampling metric)");
  frt->add_option("--e-cols", f_e_cols, "analysis columns known population-wide");
  frt->add_option("--c-cols", f_c_cols, "analysis columns for sampled units");
  frt->add_option("--null-effect", f_null, "hypothesized constant effect (default 0)");
  frt->add_option("--statistic", f_statistic, "dim | adjusted");
  frt->add_option("--draws", f_draws, "Monte Carlo resamples (default 1000)");
  frt->add_option("--seed", f_seed, "seed")->required();
  frt->add_option("--stream", f_stream, "stream index (default 0)");
  frt->add_flag("--invert", f_invert, "also invert tests into a confidence interval");
  frt->add_option("--alpha", f_alpha, "level for --invert (default 0.05)");
  frt->add_option("--out", f_out, "output path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (design->parsed()) {
    const CsvTable table = resem::load_table(d_covariates);
    const auto w_names = split_names(d_w_cols);
    const auto x_names = split_names(d_x_cols);
    std::vector<long> missing;
    std::vector<int> all_rows(table.rows.size());
    for (std::size_t i = 0; i < all_rows.size(); ++i) all_rows[i] = static_cast<int>(i);

    resem::FinitePopulation pop;
    pop.w = gather_block(table, w_names, all_rows, &missing);
    pop.x = gather_block(table, x_names, all_rows, &missing);
    reject_missing(missing, "covariate values");
    const int n_units = static_cast<int>(table.rows.size());
    pop.y1 = Eigen::VectorXd::Zero(n_units);
    pop.y0 = Eigen::VectorXd::Zero(n_units);
    pop.e = Eigen::MatrixXd(n_units, 0);
    pop.c = Eigen::MatrixXd(n_units, 0);

    resem::DesignSpec spec;
    spec.sample_size = d_n;
    spec.treated_size = d_n1;
    spec.max_attempts = d_max_attempts;
    if (design->count("--a-s") || design->count("--a-t")) {
      const double a_s = design->count("--a-s")
                             ? d_a_s
                             : resem::threshold_from_acceptance(
                                   std::max<int>(1, static_cast<int>(pop.w.cols())), d_p_s);
      const double a_t = design->count("--a-t")
                             ? d_a_t
                             : resem::threshold_from_acceptance(
                                   std::max<int>(1, static_cast<int>(pop.x.cols())), d_p_t);
      spec.criteria = BalanceCriteria::from_thresholds(
          static_cast<int>(pop.w.cols()), static_cast<int>(pop.x.cols()), a_s, a_t);
    } else {
      spec.criteria = BalanceCriteria::from_acceptance(
          static_cast<int>(pop.w.cols()), static_cast<int>(pop.x.cols()), d_p_s, d_p_t);
    }

    resem::RngStream rng(d_seed, d_stream);
    const resem::Realization realization =
        d_single_stage ? resem::run_resem_single_stage(pop, spec, rng)
                       : resem::run_resem(pop, spec, rng);
    emit(resem::realization_to_json(realization, spec.criteria), d_out);
    return 0;
  }

  if (estimate->parsed()) {
    auto inputs = load_experiment(e_data, e_design, e_y, split_names(e_w_cols),
                                  split_names(e_x_cols), split_names(e_e_cols),
                                  split_names(e_c_cols));
    ObservedExperiment& exp = inputs.exp;

    resem::InferenceReport report;
    report.adjust = e_adjust;
    report.alpha = e_alpha;
    report.sample_size = exp.sample_size();
    report.flags.sampling_known = !e_sampling_unknown;
    report.flags.assignment_known = !e_assignment_unknown;

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(exp.c.cols());
    Eigen::VectorXd gamma = Eigen::VectorXd::Zero(exp.e.cols());
    if (e_adjust == "estimated") {
      const auto coef = resem::fit_adjustment_coefficients(exp);
      beta = coef.beta;
      gamma = coef.gamma;
    } else if (e_adjust == "fixed") {
      const auto parse_coefs = [](const std::string& text, Eigen::Index expected,
                                  const char* which) {
        const auto names = split_names(text);
        if (static_cast<Eigen::Index>(names.size()) != expected)
          throw DomainError(std::string(which) + " needs exactly " +
                            std::to_string(expected) + " comma-separated values");
        Eigen::VectorXd out(expected);
        for (Eigen::Index i = 0; i < expected; ++i)
          out(i) = std::stod(names[static_cast<std::size_t>(i)]);
        return out;
      };
      if (!e_beta.empty()) beta = parse_coefs(e_beta, exp.c.cols(), "--beta");
      if (!e_gamma.empty()) gamma = parse_coefs(e_gamma, exp.e.cols(), "--gamma");
    } else if (e_adjust != "none") {
      throw DomainError("--adjust must be none, fixed or estimated");
    }

    report.estimate = resem::adjusted_estimator(exp, beta, gamma);
    const auto components = resem::estimate_components(exp, beta, gamma, report.flags);
    report.v_hat = components.v_hat;
    report.r_s2 = components.r_s2;
    report.r_t2 = components.r_t2;
    report.beta = beta;
    report.gamma = gamma;

    resem::AsymptoticLaw shape;
    shape.v = components.v_hat;
    shape.r_s2 = components.r_s2;
    shape.r_t2 = components.r_t2;
    shape.j = std::max(1, inputs.criteria.sampling_dim);
    shape.k = std::max(1, inputs.criteria.assignment_dim);
    shape.a_s = inputs.criteria.a_s;
    shape.a_t = inputs.criteria.a_t;

    resem::LawMonteCarlo mc;
    mc.draws = e_nu_draws;
    mc.seed = e_nu_seed;
    const auto [lo, hi] = resem::confidence_interval(report.estimate, components,
                                                     shape, e_alpha,
                                                     exp.sample_size(), mc);
    report.ci_lo = lo;
    report.ci_hi = hi;
    const double v_j = resem::truncated_variance_factor(shape.j, shape.a_s);
    const double v_k = resem::truncated_variance_factor(shape.k, shape.a_t);
    report.variance = components.v_hat / exp.sample_size() *
                      (1.0 - resem::priav(components.r_s2, components.r_t2, v_j, v_k));
    emit(resem::inference_report_to_json(report), e_out);
    return 0;
  }

  if (simulate->parsed()) {
    auto config = resem::simulation_config_from_json(resem::read_text_file(s_config));
    if (!s_out.empty()) config.output_path = s_out;
    const auto summary = resem::run_replications(config);
    resem::write_report(summary, config.output_path, config.output_format);
    for (const auto& cell : summary.cells) {
      if (cell.status != "ok") {
        std::cerr << "error: scenario " << cell.scenario << " (n=" << cell.n
                  << ") aborted: " << cell.status << "\n";
        return 3;
      }
    }
    return 0;
  }

  if (frt->parsed()) {
    auto inputs = load_experiment(f_data, f_design, f_y, split_names(f_w_cols),
                                  split_names(f_x_cols), split_names(f_e_cols),
                                  split_names(f_c_cols));
    resem::FrtStatistic statistic;
    if (f_statistic == "dim") {
      statistic = resem::FrtStatistic::dim();
    } else if (f_statistic == "adjusted") {
      statistic = resem::FrtStatistic::adjusted();
    } else {
      throw DomainError("--statistic must be dim or adjusted");
    }

    resem::FrtOptions options;
    options.draws = f_draws;
    resem::RngStream rng(f_seed, f_stream);
    const auto null = resem::SharpNull::constant(f_null, inputs.exp.sample_size());
    const auto result =
        resem::frt_p_value(inputs.exp, inputs.criteria, null, statistic, options, rng);

    nlohmann::json j;
    j["statistic"] = result.statistic;
    j["statistic_kind"] = f_statistic;
    j["null_effect"] = f_null;
    j["p_value"] = result.p_value;
    j["resamples"] = result.resamples;
    j["exhaustive"] = result.exhaustive;
    j["attempts_total"] = result.attempts_total;
    if (f_invert) {
      resem::RngStream inv_rng(f_seed, f_stream + 1);
      const auto interval =
          resem::invert_tests_ci(inputs.exp, inputs.criteria, f_alpha,
                                 resem::InversionGrid{}, statistic, options, inv_rng);
      j["inversion"] = {{"lo", interval.lo},
                        {"hi", interval.hi},
                        {"empty", interval.empty},
                        {"alpha", f_alpha}};
    }
    emit(j.dump(2) + "\n", f_out);
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const resem::StarvationError& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 3;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 2;
  }
}
