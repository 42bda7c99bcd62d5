#include "resem/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <nlohmann/json.hpp>

#include "resem/errors.hpp"

namespace resem {
namespace {

using nlohmann::json;

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(trim(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

json threshold_to_json(double a) {
  if (std::isinf(a)) return json("inf");
  return json(a);
}

double threshold_from_json(const json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "inf") return std::numeric_limits<double>::infinity();
    throw DomainError("realization JSON: unrecognized threshold string");
  }
  return j.get<double>();
}

}  // namespace

int CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return static_cast<int>(i);
  return -1;
}

int CsvTable::require_column(const std::string& name) const {
  const int idx = column(name);
  if (idx < 0) throw DomainError("missing required column '" + name + "'");
  return idx;
}

std::optional<double> CsvTable::numeric(std::size_t row, int col) const {
  const std::string& cell = rows[row][static_cast<std::size_t>(col)];
  if (cell.empty() || cell == "NA" || cell == "na") return std::nullopt;
  char* end = nullptr;
  const double value = std::strtod(cell.c_str(), &end);
  if (end == cell.c_str() || *end != '\0')
    throw DomainError(path + ":" + std::to_string(line_numbers[row]) +
                      ": non-numeric value '" + cell + "' in column '" +
                      columns[static_cast<std::size_t>(col)] + "'");
  if (std::isnan(value)) return std::nullopt;
  return value;
}

CsvTable load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open '" + path + "'");
  CsvTable table;
  table.path = path;
  std::string line;
  long line_number = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty() || line[0] == '#') continue;
    auto fields = split_csv_line(line);
    if (!have_header) {
      table.columns = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.columns.size())
      throw DomainError(path + ":" + std::to_string(line_number) +
                        ": expected " + std::to_string(table.columns.size()) +
                        " fields, found " + std::to_string(fields.size()));
    table.rows.push_back(std::move(fields));
    table.line_numbers.push_back(line_number);
  }
  if (!have_header) throw DomainError(path + ": empty file");
  return table;
}

namespace {

Eigen::MatrixXd extract_block(const CsvTable& table, const std::vector<std::string>& names,
                              std::vector<long>* bad_rows) {
  Eigen::MatrixXd block(static_cast<Eigen::Index>(table.rows.size()),
                        static_cast<Eigen::Index>(names.size()));
  std::vector<int> cols;
  cols.reserve(names.size());
  for (const auto& name : names) cols.push_back(table.require_column(name));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto cell = table.numeric(r, cols[c]);
      if (!cell.has_value()) {
        bad_rows->push_back(static_cast<long>(r + 1));
        block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = 0.0;
      } else {
        block(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *cell;
      }
    }
  }
  return block;
}

Eigen::VectorXd extract_column(const CsvTable& table, const std::string& name,
                               std::vector<long>* bad_rows) {
  const int col = table.require_column(name);
  Eigen::VectorXd out(static_cast<Eigen::Index>(table.rows.size()));
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto cell = table.numeric(r, col);
    if (!cell.has_value()) {
      bad_rows->push_back(static_cast<long>(r + 1));
      out(static_cast<Eigen::Index>(r)) = 0.0;
    } else {
      out(static_cast<Eigen::Index>(r)) = *cell;
    }
  }
  return out;
}

std::vector<int> extract_labels(const CsvTable& table, const std::string& name,
                                std::vector<long>* bad_rows) {
  const int col = table.require_column(name);
  std::vector<int> out(table.rows.size());
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto cell = table.numeric(r, col);
    if (!cell.has_value()) {
      bad_rows->push_back(static_cast<long>(r + 1));
      out[r] = 0;
    } else {
      out[r] = static_cast<int>(std::llround(*cell));
    }
  }
  return out;
}

}  // namespace

FinitePopulation load_population(const std::string& path, const PopulationSchema& schema) {
  const CsvTable table = load_table(path);
  std::vector<long> bad_rows;

  FinitePopulation pop;
  pop.y1 = extract_column(table, schema.y1, &bad_rows);
  pop.y0 = extract_column(table, schema.y0, &bad_rows);
  pop.w = extract_block(table, schema.w, &bad_rows);
  pop.x = extract_block(table, schema.x, &bad_rows);
  pop.e = extract_block(table, schema.e, &bad_rows);
  pop.c = extract_block(table, schema.c, &bad_rows);
  if (!schema.strata.empty()) pop.strata = extract_labels(table, schema.strata, &bad_rows);
  if (!schema.cluster.empty()) pop.clusters = extract_labels(table, schema.cluster, &bad_rows);

  if (!bad_rows.empty()) {
    std::sort(bad_rows.begin(), bad_rows.end());
    bad_rows.erase(std::unique(bad_rows.begin(), bad_rows.end()), bad_rows.end());
    std::string rows;
    for (std::size_t i = 0; i < bad_rows.size() && i < 20; ++i)
      rows += (i ? ", " : "") + std::to_string(bad_rows[i]);
    if (bad_rows.size() > 20) rows += ", ...";
    throw DomainError(path + ": rows with missing values rejected (data rows " + rows + ")");
  }
  pop.validate();
  return pop;
}

void save_population(const FinitePopulation& pop, const PopulationSchema& schema,
                     const std::string& path) {
  if (static_cast<Eigen::Index>(schema.w.size()) != pop.w.cols() ||
      static_cast<Eigen::Index>(schema.x.size()) != pop.x.cols() ||
      static_cast<Eigen::Index>(schema.e.size()) != pop.e.cols() ||
      static_cast<Eigen::Index>(schema.c.size()) != pop.c.cols())
    throw DomainError("save_population: schema does not match population blocks");

  std::ostringstream out;
  out << schema.y1 << "," << schema.y0;
  for (const auto& n : schema.w) out << "," << n;
  for (const auto& n : schema.x) out << "," << n;
  for (const auto& n : schema.e) out << "," << n;
  for (const auto& n : schema.c) out << "," << n;
  if (!schema.strata.empty()) out << "," << schema.strata;
  if (!schema.cluster.empty()) out << "," << schema.cluster;
  out << "\n";
  for (int i = 0; i < pop.size(); ++i) {
    out << format_double(pop.y1(i)) << "," << format_double(pop.y0(i));
    for (Eigen::Index j = 0; j < pop.w.cols(); ++j) out << "," << format_double(pop.w(i, j));
    for (Eigen::Index j = 0; j < pop.x.cols(); ++j) out << "," << format_double(pop.x(i, j));
    for (Eigen::Index j = 0; j < pop.e.cols(); ++j) out << "," << format_double(pop.e(i, j));
    for (Eigen::Index j = 0; j < pop.c.cols(); ++j) out << "," << format_double(pop.c(i, j));
    if (!schema.strata.empty()) out << "," << pop.strata[static_cast<std::size_t>(i)];
    if (!schema.cluster.empty()) out << "," << pop.clusters[static_cast<std::size_t>(i)];
    out << "\n";
  }
  write_text_file(path, out.str());
}

std::string realization_to_json(const Realization& realization,
                                const BalanceCriteria& criteria) {
  json j;
  j["z"] = realization.z;
  j["t_sampled_order"] = realization.t;
  j["m_s"] = realization.m_s;
  j["m_t"] = realization.m_t;
  j["attempts"] = {{"sampling", realization.attempts_s},
                   {"assignment", realization.attempts_t}};
  j["seed"] = {{"algorithm", realization.seed.algorithm},
               {"seed", realization.seed.seed},
               {"stream", realization.seed.stream}};
  j["criteria"] = {{"sampling_dim", criteria.sampling_dim},
                   {"assignment_dim", criteria.assignment_dim},
                   {"a_s", threshold_to_json(criteria.a_s)},
                   {"a_t", threshold_to_json(criteria.a_t)},
                   {"p_s", criteria.p_s},
                   {"p_t", criteria.p_t}};
  return j.dump(2) + "\n";
}

LoadedRealization realization_from_json(const std::string& text) {
  json j = json::parse(text);
  LoadedRealization out;
  out.realization.z = j.at("z").get<std::vector<std::uint8_t>>();
  out.realization.t = j.at("t_sampled_order").get<std::vector<std::uint8_t>>();
  out.realization.m_s = j.at("m_s").get<double>();
  out.realization.m_t = j.at("m_t").get<double>();
  out.realization.attempts_s = j.at("attempts").at("sampling").get<long>();
  out.realization.attempts_t = j.at("attempts").at("assignment").get<long>();
  out.realization.seed.algorithm = j.at("seed").at("algorithm").get<std::string>();
  out.realization.seed.seed = j.at("seed").at("seed").get<std::uint64_t>();
  out.realization.seed.stream = j.at("seed").at("stream").get<std::uint64_t>();
  const auto& c = j.at("criteria");
  out.criteria.sampling_dim = c.at("sampling_dim").get<int>();
  out.criteria.assignment_dim = c.at("assignment_dim").get<int>();
  out.criteria.a_s = threshold_from_json(c.at("a_s"));
  out.criteria.a_t = threshold_from_json(c.at("a_t"));
  out.criteria.p_s = c.at("p_s").get<double>();
  out.criteria.p_t = c.at("p_t").get<double>();
  return out;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DomainError("cannot write '" + path + "'");
  out << text;
  if (!out) throw DomainError("failed while writing '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DomainError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string inference_report_to_json(const InferenceReport& report) {
  json j;
  j["estimate"] = report.estimate;
  j["variance"] = report.variance;
  j["ci"] = {{"lo", report.ci_lo}, {"hi", report.ci_hi}};
  j["alpha"] = report.alpha;
  j["n"] = report.sample_size;
  j["components"] = {{"v_hat", report.v_hat},
                     {"r_s2", report.r_s2},
                     {"r_t2", report.r_t2}};
  j["knowledge"] = {{"sampling", report.flags.sampling_known},
                    {"assignment", report.flags.assignment_known}};
  j["adjust"] = report.adjust;
  j["beta"] = std::vector<double>(report.beta.data(), report.beta.data() + report.beta.size());
  j["gamma"] =
      std::vector<double>(report.gamma.data(), report.gamma.data() + report.gamma.size());
  return j.dump(2) + "\n";
}

namespace {

json scenario_to_json(const ScenarioConfig& s) {
  return json{{"name", s.name},
              {"p_s", s.p_s},
              {"p_t", s.p_t},
              {"adjust", s.adjust == ScenarioConfig::Adjust::estimated ? "estimated" : "none"}};
}

json schema_to_json(const PopulationSchema& schema) {
  json j;
  j["y1"] = schema.y1;
  j["y0"] = schema.y0;
  j["w"] = schema.w;
  j["x"] = schema.x;
  j["e"] = schema.e;
  j["c"] = schema.c;
  if (!schema.strata.empty()) j["strata"] = schema.strata;
  if (!schema.cluster.empty()) j["cluster"] = schema.cluster;
  return j;
}

PopulationSchema schema_from_json(const json& j) {
  PopulationSchema schema;
  schema.y1 = j.value("y1", "y1");
  schema.y0 = j.value("y0", "y0");
  schema.w = j.value("w", std::vector<std::string>{});
  schema.x = j.value("x", std::vector<std::string>{});
  schema.e = j.value("e", std::vector<std::string>{});
  schema.c = j.value("c", std::vector<std::string>{});
  schema.strata = j.value("strata", "");
  schema.cluster = j.value("cluster", "");
  return schema;
}

json config_to_json_object(const SimulationConfig& config) {
  json j;
  if (config.population_csv.empty()) {
    j["population"] = {{"source", "model"},
                       {"size", config.population_size},
                       {"seed", config.population_seed}};
  } else {
    j["population"] = {{"source", "csv"},
                       {"path", config.population_csv},
                       {"schema", schema_to_json(config.schema)}};
  }
  j["sample_sizes"] = config.sample_sizes;
  j["treated_fraction"] = config.treated_fraction;
  j["scenarios"] = json::array();
  for (const auto& s : config.scenarios) j["scenarios"].push_back(scenario_to_json(s));
  j["replicates"] = config.replicates;
  j["alpha"] = config.alpha;
  j["master_seed"] = config.master_seed;
  j["threads"] = config.threads;
  j["max_attempts"] = config.max_attempts;
  j["nu"] = {{"draws", config.nu_draws},
             {"seed", config.nu_seed},
             {"bucket_width", config.nu_bucket_width},
             {"strict", config.strict}};
  j["output"] = {{"path", config.output_path}, {"format", config.output_format}};
  return j;
}

}  // namespace

std::string simulation_config_to_json(const SimulationConfig& config) {
  return config_to_json_object(config).dump(2) + "\n";
}

SimulationConfig simulation_config_from_json(const std::string& text) {
  json j = json::parse(text);
  SimulationConfig config;
  if (j.contains("population")) {
    const auto& p = j["population"];
    const std::string source = p.value("source", "model");
    if (source == "model") {
      config.population_size = p.value("size", config.population_size);
      config.population_seed = p.value("seed", config.population_seed);
    } else if (source == "csv") {
      config.population_csv = p.at("path").get<std::string>();
      config.schema = schema_from_json(p.value("schema", json::object()));
    } else {
      throw DomainError("simulation config: population source must be model or csv");
    }
  }
  config.sample_sizes = j.value("sample_sizes", config.sample_sizes);
  config.treated_fraction = j.value("treated_fraction", config.treated_fraction);
  if (j.contains("scenarios")) {
    config.scenarios.clear();
    for (const auto& s : j["scenarios"]) {
      ScenarioConfig scenario;
      scenario.name = s.at("name").get<std::string>();
      scenario.p_s = s.value("p_s", 1.0);
      scenario.p_t = s.value("p_t", 1.0);
      const std::string adjust = s.value("adjust", "none");
      if (adjust == "estimated")
        scenario.adjust = ScenarioConfig::Adjust::estimated;
      else if (adjust == "none")
        scenario.adjust = ScenarioConfig::Adjust::none;
      else
        throw DomainError("simulation config: adjust must be none or estimated");
      config.scenarios.push_back(std::move(scenario));
    }
  }
  config.replicates = j.value("replicates", config.replicates);
  config.alpha = j.value("alpha", config.alpha);
  config.master_seed = j.value("master_seed", config.master_seed);
  config.threads = j.value("threads", config.threads);
  config.max_attempts = j.value("max_attempts", config.max_attempts);
  if (j.contains("nu")) {
    const auto& nu = j["nu"];
    config.nu_draws = nu.value("draws", config.nu_draws);
    config.nu_seed = nu.value("seed", config.nu_seed);
    config.nu_bucket_width = nu.value("bucket_width", config.nu_bucket_width);
    config.strict = nu.value("strict", config.strict);
  }
  if (j.contains("output")) {
    config.output_path = j["output"].value("path", config.output_path);
    config.output_format = j["output"].value("format", config.output_format);
  }
  return config;
}

std::string report_to_csv(const ReplicationSummary& summary) {
  std::ostringstream out;
  out << "# config " << config_to_json_object(summary.config).dump() << "\n";
  out << "scenario,n,n1,p_s,p_t,adjust,replicates,true_tau,mean_estimate,"
         "var_estimate,coverage,coverage_mc_se,mean_ci_length_sqrt_n,"
         "mean_attempts_sampling,mean_attempts_assignment,status\n";
  for (const auto& cell : summary.cells) {
    out << cell.scenario << "," << cell.n << "," << cell.n1 << ","
        << format_double(cell.p_s) << "," << format_double(cell.p_t) << ","
        << cell.adjust << "," << cell.replicates << ","
        << format_double(cell.true_tau) << "," << format_double(cell.mean_estimate)
        << "," << format_double(cell.var_estimate) << ","
        << format_double(cell.coverage) << "," << format_double(cell.coverage_mc_se)
        << "," << format_double(cell.mean_ci_length_sqrt_n) << ","
        << format_double(cell.mean_attempts_sampling) << ","
        << format_double(cell.mean_attempts_assignment) << ","
        << (cell.status == "ok" ? "ok" : "error") << "\n";
  }
  return out.str();
}

std::string report_to_json(const ReplicationSummary& summary) {
  json j;
  j["config"] = config_to_json_object(summary.config);
  j["cells"] = json::array();
  for (const auto& cell : summary.cells) {
    j["cells"].push_back({{"scenario", cell.scenario},
                          {"n", cell.n},
                          {"n1", cell.n1},
                          {"p_s", cell.p_s},
                          {"p_t", cell.p_t},
                          {"adjust", cell.adjust},
                          {"replicates", cell.replicates},
                          {"true_tau", cell.true_tau},
                          {"mean_estimate", cell.mean_estimate},
                          {"var_estimate", cell.var_estimate},
                          {"coverage", cell.coverage},
                          {"coverage_mc_se", cell.coverage_mc_se},
                          {"mean_ci_length_sqrt_n", cell.mean_ci_length_sqrt_n},
                          {"mean_attempts_sampling", cell.mean_attempts_sampling},
                          {"mean_attempts_assignment", cell.mean_attempts_assignment},
                          {"status", cell.status}});
  }
  return j.dump(2) + "\n";
}

void write_report(const ReplicationSummary& summary, const std::string& path,
                  const std::string& format) {
  if (format == "csv") {
    write_text_file(path, report_to_csv(summary));
  } else if (format == "json") {
    write_text_file(path, report_to_json(summary));
  } else {
    throw DomainError("write_report: format must be csv or json");
  }
}

}  // namespace resem
