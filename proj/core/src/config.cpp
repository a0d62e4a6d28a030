#include <algorithm>
#include <fstream>

#include "dgpsi/errors.hpp"
#include "dgpsi/experiment.hpp"

namespace dgpsi {

namespace {

nlohmann::json schema_to_json(const SchemaConfig& s) {
  return {{"time_column", s.time_column}, {"columns", s.columns}, {"output", s.output}};
}

SchemaConfig schema_from_json(const nlohmann::json& j, SchemaConfig s) {
  s.time_column = j.value("time_column", s.time_column);
  if (j.contains("columns")) s.columns = j.at("columns").get<std::vector<std::string>>();
  s.output = j.value("output", s.output);
  return s;
}

nlohmann::json mice_to_json(const MiceConfig& m) {
  return {{"imputations", m.imputations}, {"cycles", m.cycles}, {"include_time", m.include_time}};
}

MiceConfig mice_from_json(const nlohmann::json& j, MiceConfig m) {
  m.imputations = j.value("imputations", m.imputations);
  m.cycles = j.value("cycles", m.cycles);
  m.include_time = j.value("include_time", m.include_time);
  m.validate();
  return m;
}

const std::vector<std::string> kKnownKeys{"mode",   "methods", "proportions", "windows", "seed",
                                          "inputs", "schema",  "synthetic",   "fit",     "sem",
                                          "mice",   "mask_unit", "threads"};

}  // namespace

nlohmann::json experiment_config_to_json(const ExperimentConfig& c) {
  std::vector<std::string> methods;
  for (Method m : c.methods) methods.emplace_back(to_string(m));
  return {{"mode", std::string(to_string(c.mode))},
          {"methods", methods},
          {"proportions", c.proportions},
          {"windows", c.windows},
          {"seed", c.seed},
          {"inputs", c.inputs},
          {"schema", schema_to_json(c.schema)},
          {"synthetic", synthetic_config_to_json(c.synthetic)},
          {"fit", fit_config_to_json(c.fit)},
          {"sem", sem_config_to_json(c.sem)},
          {"mice", mice_to_json(c.mice)},
          {"mask_unit", std::string(to_string(c.mask_unit))},
          {"threads", c.threads}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& in, ExperimentConfig c) {
  const nlohmann::json& j = in.contains("manifest") ? in.at("manifest").at("config") : in;
  if (!j.is_object()) throw SchemaError("experiment config must be a JSON object");
  for (const auto& [key, value] : j.items())
    if (std::find(kKnownKeys.begin(), kKnownKeys.end(), key) == kKnownKeys.end())
      throw SchemaError("unknown config key '" + key + "'");
  try {
    if (j.contains("mode")) c.mode = experiment_mode_from_string(j.at("mode").get<std::string>());
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
    }
    if (j.contains("proportions")) c.proportions = j.at("proportions").get<std::vector<double>>();
    c.windows = j.value("windows", c.windows);
    c.seed = j.value("seed", c.seed);
    if (j.contains("inputs")) c.inputs = j.at("inputs").get<std::vector<std::string>>();
    if (j.contains("schema")) c.schema = schema_from_json(j.at("schema"), c.schema);
    if (j.contains("synthetic")) c.synthetic = synthetic_config_from_json(j.at("synthetic"), c.synthetic);
    if (j.contains("fit")) c.fit = fit_config_from_json(j.at("fit"), c.fit);
    if (j.contains("sem")) c.sem = sem_config_from_json(j.at("sem"), c.sem);
    if (j.contains("mice")) c.mice = mice_from_json(j.at("mice"), c.mice);
    if (j.contains("mask_unit")) c.mask_unit = mask_unit_from_string(j.at("mask_unit").get<std::string>());
    c.threads = j.value("threads", c.threads);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw SchemaError(path.string() + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

}  // namespace dgpsi
