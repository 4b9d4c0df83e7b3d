#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "capsim/column.hpp"
#include "capsim/grm.hpp"
#include <nlohmann/json.hpp>

namespace capsim {

using nlohmann::json;

namespace {

int line_of_byte(const std::string& path, std::size_t byte) {
  std::ifstream in(path, std::ios::binary);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  int line = 1;
  for (std::size_t i = 0; i < std::min(byte, text.size()); ++i) {
    if (text[i] == '\n') ++line;
  }
  return line;
}

json parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidConfig("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    std::ostringstream os;
    os << path << ":" << line_of_byte(path, e.byte) << ": " << e.what();
    throw InvalidConfig(os.str());
  }
}

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!known.count(it.key())) {
      throw InvalidConfig(where + ": unknown key '" + it.key() + "'");
    }
  }
}

}  // namespace

ColumnParams column_params_from_json(const json& j) {
  static const std::set<std::string> known = {"D_ax", "A",       "eps_c",   "eps_p", "k_f",
                                              "r_p",  "D_eff",   "k_1",     "k_2",   "q_max_1",
                                              "q_max_2", "K",    "L",       "N_z",   "N_r"};
  reject_unknown(j, known, "column params");
  ColumnParams p;
  p.D_ax = j.at("D_ax").get<double>();
  p.A = j.at("A").get<double>();
  p.eps_c = j.at("eps_c").get<double>();
  p.eps_p = j.at("eps_p").get<double>();
  p.k_f = j.at("k_f").get<double>();
  p.r_p = j.at("r_p").get<double>();
  p.D_eff = j.at("D_eff").get<double>();
  p.k_1 = j.at("k_1").get<double>();
  p.k_2 = j.at("k_2").get<double>();
  p.q_max_1 = j.at("q_max_1").get<double>();
  p.q_max_2 = j.at("q_max_2").get<double>();
  p.K = j.at("K").get<double>();
  p.L = j.at("L").get<double>();
  p.N_z = j.at("N_z").get<int>();
  p.N_r = j.at("N_r").get<int>();
  p.validate();
  return p;
}

json column_params_to_json(const ColumnParams& p) {
  json j;
  j["D_ax"] = p.D_ax;
  j["A"] = p.A;
  j["eps_c"] = p.eps_c;
  j["eps_p"] = p.eps_p;
  j["k_f"] = p.k_f;
  j["r_p"] = p.r_p;
  j["D_eff"] = p.D_eff;
  j["k_1"] = p.k_1;
  j["k_2"] = p.k_2;
  j["q_max_1"] = p.q_max_1;
  j["q_max_2"] = p.q_max_2;
  j["K"] = p.K;
  j["L"] = p.L;
  j["N_z"] = p.N_z;
  j["N_r"] = p.N_r;
  return j;
}

StepConfig step_config_from_json(const json& j) {
  static const std::set<std::string> known = {"dt_macro", "n_substeps", "method"};
  reject_unknown(j, known, "integrator config");
  StepConfig cfg;
  cfg.dt_macro = j.value("dt_macro", cfg.dt_macro);
  cfg.n_substeps = j.value("n_substeps", cfg.n_substeps);
  cfg.method = j.value("method", cfg.method);
  cfg.validate();
  return cfg;
}

ColumnParams load_column_params(const std::string& path) {
  json j = parse_file(path);
  if (j.contains("column")) return column_params_from_json(j.at("column"));
  return column_params_from_json(j);
}

StepConfig load_step_config(const std::string& path) {
  json j = parse_file(path);
  if (j.contains("integrator")) return step_config_from_json(j.at("integrator"));
  return StepConfig{};
}

void save_column_config(const std::string& path, const ColumnParams& p, const StepConfig& cfg) {
  json j;
  j["column"] = column_params_to_json(p);
  j["integrator"] = {{"dt_macro", cfg.dt_macro}, {"n_substeps", cfg.n_substeps}, {"method", cfg.method}};
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write config file: " + path);
  out << j.dump(2) << "\n";
}

void write_state_csv(const std::string& path, const ColumnParams& p, const ColumnState& x) {
  if (x.size() != static_cast<std::size_t>(p.state_size())) {
    throw InvalidConfig("write_state_csv: state size mismatch");
  }
  std::ofstream out(path);
  if (!out) throw InvalidConfig("cannot write state CSV: " + path);
  out << "node_index,c";
  for (int j = 0; j < p.N_r; ++j) out << ",cp_" << j;
  out << ",q1,q2\n";
  out << std::setprecision(17);
  for (int i = 0; i < p.N_z; ++i) {
    out << i << "," << x[idx_c(p, i)];
    for (int j = 0; j < p.N_r; ++j) out << "," << x[idx_cp(p, i, j)];
    out << "," << x[idx_q(p, i, 1)] << "," << x[idx_q(p, i, 2)] << "\n";
  }
}

}  // namespace capsim
