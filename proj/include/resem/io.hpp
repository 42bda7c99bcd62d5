#pragma once

#include <optional>
#include <string>
#include <vector>

#include "resem/balance.hpp"
#include "resem/design.hpp"
#include "resem/estimation.hpp"
#include "resem/population.hpp"
#include "resem/simulation.hpp"

namespace resem {

// A parsed CSV: header names plus trimmed raw cells.  Numeric access happens
// on demand so string-valued columns can coexist with numeric ones; empty
// and NA cells are nullopt and non-numeric cells are an error naming the
// file line.  Lines starting with '#' are skipped.
struct CsvTable {
  std::string path;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<long> line_numbers;  // source line of each data row

  int column(const std::string& name) const;  // -1 when absent
  int require_column(const std::string& name) const;
  std::optional<double> numeric(std::size_t row, int col) const;
};

CsvTable load_table(const std::string& path);

// Column-role mapped population ingestion; rows with missing values in any
// declared column are rejected with their line numbers.
FinitePopulation load_population(const std::string& path, const PopulationSchema& schema);
void save_population(const FinitePopulation& pop, const PopulationSchema& schema,
                     const std::string& path);

// Realization <-> JSON (fields z, t_sampled_order, m_s, m_t, attempts, seed,
// plus the criteria the draw was accepted under).  Infinite thresholds are
// stored as the string "inf".
std::string realization_to_json(const Realization& realization,
                                const BalanceCriteria& criteria);
struct LoadedRealization {
  Realization realization;
  BalanceCriteria criteria;
};
LoadedRealization realization_from_json(const std::string& text);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

// Inference output of the estimate CLI.
struct InferenceReport {
  double estimate = 0.0;
  double variance = 0.0;  // estimated variance of the estimator
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double alpha = 0.05;
  int sample_size = 0;
  double r_s2 = 0.0;
  double r_t2 = 0.0;
  double v_hat = 0.0;
  KnowledgeFlags flags;
  std::string adjust = "none";
  Eigen::VectorXd beta, gamma;
};

std::string inference_report_to_json(const InferenceReport& report);

SimulationConfig simulation_config_from_json(const std::string& text);
std::string simulation_config_to_json(const SimulationConfig& config);

// Plot-ready summary table.  Stable column order, every float at 17
// significant digits, config echoed for reproducibility; the written file
// carries no wall-clock fields so identical runs are byte-identical.
void write_report(const ReplicationSummary& summary, const std::string& path,
                  const std::string& format);
std::string report_to_csv(const ReplicationSummary& summary);
std::string report_to_json(const ReplicationSummary& summary);

}  // namespace resem
