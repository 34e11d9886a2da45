#include "tmr/config.hpp"

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "tmr/errors.hpp"

namespace tmr {

using nlohmann::json;

namespace {

json schema_to_json(const WorkflowSchema& s) {
  json j;
  j["num_phases"] = s.num_phases;
  j["d_raw"] = s.d_raw;
  json actions = json::array();
  for (const auto& a : s.actions)
    actions.push_back({{"prototype", a.prototype},
                       {"min_frames", a.min_frames},
                       {"max_frames", a.max_frames}});
  j["actions"] = std::move(actions);
  json phases = json::array();
  for (const auto& p : s.phases)
    phases.push_back({{"actions", p.actions},
                      {"bias", p.bias},
                      {"successors", p.successors},
                      {"duration_weight", p.duration_weight}});
  j["phases"] = std::move(phases);
  json pairs = json::array();
  for (auto [a, b] : s.ambiguous_pairs) pairs.push_back({a, b});
  j["ambiguous_pairs"] = std::move(pairs);
  j["noise_sigma"] = s.noise_sigma;
  j["p_artifact"] = s.p_artifact;
  j["artifact_min"] = s.artifact_min;
  j["artifact_max"] = s.artifact_max;
  j["artifact_sigma"] = s.artifact_sigma;
  j["min_length"] = s.min_length;
  j["max_length"] = s.max_length;
  return j;
}

WorkflowSchema schema_from_json(const json& j) {
  WorkflowSchema s;
  s.num_phases = j.at("num_phases").get<int>();
  s.d_raw = j.at("d_raw").get<std::size_t>();
  s.actions.clear();
  for (const auto& ja : j.at("actions")) {
    ActionSpec a;
    a.prototype = ja.at("prototype").get<std::vector<double>>();
    a.min_frames = ja.at("min_frames").get<std::size_t>();
    a.max_frames = ja.at("max_frames").get<std::size_t>();
    s.actions.push_back(std::move(a));
  }
  s.phases.clear();
  for (const auto& jp : j.at("phases")) {
    PhaseSpec p;
    p.actions = jp.at("actions").get<std::vector<int>>();
    p.bias = jp.at("bias").get<std::vector<double>>();
    p.successors = jp.at("successors").get<std::vector<int>>();
    p.duration_weight = jp.at("duration_weight").get<double>();
    s.phases.push_back(std::move(p));
  }
  s.ambiguous_pairs.clear();
  for (const auto& jp : j.at("ambiguous_pairs"))
    s.ambiguous_pairs.emplace_back(jp.at(0).get<int>(), jp.at(1).get<int>());
  s.noise_sigma = j.at("noise_sigma").get<double>();
  s.p_artifact = j.at("p_artifact").get<double>();
  s.artifact_min = j.at("artifact_min").get<std::size_t>();
  s.artifact_max = j.at("artifact_max").get<std::size_t>();
  s.artifact_sigma = j.at("artifact_sigma").get<double>();
  s.min_length = j.at("min_length").get<std::size_t>();
  s.max_length = j.at("max_length").get<std::size_t>();
  return s;
}

json model_to_json(const ModelConfig& m) {
  return json{{"d_raw", m.d_raw},
              {"d", m.d},
              {"d_e", m.d_e},
              {"d_h", m.d_h},
              {"num_phases", m.num_phases},
              {"clip_len", m.clip_len},
              {"bank_len", m.bank_len},
              {"mode", to_string(m.mode)},
              {"incorporation", to_string(m.incorporation)},
              {"kernel_sizes", m.kernel_sizes},
              {"fusion", to_string(m.fusion)},
              {"dropout_rate", m.dropout_rate}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.d_raw = j.at("d_raw").get<std::size_t>();
  m.d = j.at("d").get<std::size_t>();
  m.d_e = j.at("d_e").get<std::size_t>();
  m.d_h = j.at("d_h").get<std::size_t>();
  m.num_phases = j.at("num_phases").get<int>();
  m.clip_len = j.at("clip_len").get<std::size_t>();
  m.bank_len = j.at("bank_len").get<std::size_t>();
  m.mode = ablation_mode_from_string(j.at("mode").get<std::string>());
  m.incorporation = incorporation_from_string(j.at("incorporation").get<std::string>());
  m.kernel_sizes = j.at("kernel_sizes").get<std::vector<std::size_t>>();
  m.fusion = fusion_mode_from_string(j.at("fusion").get<std::string>());
  m.dropout_rate = j.at("dropout_rate").get<double>();
  return m;
}

json train_to_json(const TrainConfig& t) {
  return json{{"batch_size", t.batch_size},
              {"momentum", t.momentum},
              {"weight_decay", t.weight_decay},
              {"lr1_frame", t.lr1_frame},
              {"lr1_recurrent", t.lr1_recurrent},
              {"lr23_backbone", t.lr23_backbone},
              {"lr23_new", t.lr23_new},
              {"lr23_tvl", t.lr23_tvl},
              {"stage_iters", t.stage_iters},
              {"eval_interval", t.eval_interval},
              {"patience", t.patience},
              {"plateau_tol", t.plateau_tol},
              {"val_sample_count", t.val_sample_count}};
}

TrainConfig train_from_json(const json& j) {
  TrainConfig t;
  t.batch_size = j.at("batch_size").get<std::size_t>();
  t.momentum = j.at("momentum").get<double>();
  t.weight_decay = j.at("weight_decay").get<double>();
  t.lr1_frame = j.at("lr1_frame").get<double>();
  t.lr1_recurrent = j.at("lr1_recurrent").get<double>();
  t.lr23_backbone = j.at("lr23_backbone").get<double>();
  t.lr23_new = j.at("lr23_new").get<double>();
  t.lr23_tvl = j.at("lr23_tvl").get<double>();
  auto iters = j.at("stage_iters").get<std::vector<std::size_t>>();
  if (iters.size() != 3) throw ConfigError("config: stage_iters must have three entries");
  std::copy(iters.begin(), iters.end(), t.stage_iters.begin());
  t.eval_interval = j.at("eval_interval").get<std::size_t>();
  t.patience = j.at("patience").get<std::size_t>();
  t.plateau_tol = j.at("plateau_tol").get<double>();
  t.val_sample_count = j.at("val_sample_count").get<std::size_t>();
  return t;
}

}  // namespace

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig cfg;
  cfg.schema = default_schema();
  cfg.train = TrainConfig::desk();
  cfg.model.d = 64;
  cfg.model.d_e = 32;
  cfg.model.d_h = 64;
  return cfg;
}

ExperimentConfig ExperimentConfig::quick() {
  ExperimentConfig cfg = desk();
  cfg.model.d = 32;
  cfg.model.d_e = 16;
  cfg.model.d_h = 32;
  cfg.train.batch_size = 8;
  cfg.train.stage_iters = {150, 600, 80};
  cfg.train.eval_interval = 25;
  cfg.train.val_sample_count = 64;
  return cfg;
}

void ExperimentConfig::validate() const {
  validate_schema(schema);
  model.validate();
  train.validate();
  if (schema.d_raw != model.d_raw)
    throw ConfigError("config: schema d_raw and model d_raw disagree");
  if (schema.num_phases != model.num_phases)
    throw ConfigError("config: schema and model phase counts disagree");
  if (data.n_train < 1 || data.n_val < 1 || data.n_test < 1)
    throw ConfigError("config: all split sizes must be >= 1");
  if (smooth_window % 2 == 0)
    throw ConfigError("config: smooth window must be odd");
  if (out_dir.empty()) throw ConfigError("config: out_dir must not be empty");
}

std::string config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["version"] = cfg.version;
  j["seed"] = cfg.seed;
  j["out_dir"] = cfg.out_dir;
  j["schema"] = schema_to_json(cfg.schema);
  j["data"] = {{"n_train", cfg.data.n_train},
               {"n_val", cfg.data.n_val},
               {"n_test", cfg.data.n_test}};
  j["model"] = model_to_json(cfg.model);
  j["train"] = train_to_json(cfg.train);
  j["smooth_window"] = cfg.smooth_window;
  return j.dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("config: JSON parse failure: ") + e.what());
  }
  try {
    ExperimentConfig cfg;
    cfg.version = j.at("version").get<std::uint32_t>();
    if (cfg.version != 1)
      throw ConfigError("config: unsupported version " + std::to_string(cfg.version));
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.out_dir = j.at("out_dir").get<std::string>();
    cfg.schema = schema_from_json(j.at("schema"));
    cfg.data.n_train = j.at("data").at("n_train").get<std::size_t>();
    cfg.data.n_val = j.at("data").at("n_val").get<std::size_t>();
    cfg.data.n_test = j.at("data").at("n_test").get<std::size_t>();
    cfg.model = model_from_json(j.at("model"));
    cfg.train = train_from_json(j.at("train"));
    cfg.smooth_window = j.at("smooth_window").get<std::size_t>();
    return cfg;
  } catch (const json::exception& e) {
    throw DataError(std::string("config: missing or mistyped field: ") + e.what());
  }
}

void save_config(const std::filesystem::path& path, const ExperimentConfig& cfg) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw DataError("config: cannot open for writing: " + path.string());
  os << config_to_json(cfg);
  if (!os) throw DataError("config: write failed: " + path.string());
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DataError("config: cannot open: " + path.string());
  std::string text(std::istreambuf_iterator<char>(is), {});
  return config_from_json(text);
}

std::filesystem::path resolve_out_dir(const ExperimentConfig& cfg) {
  std::filesystem::path out(cfg.out_dir);
  if (out.is_relative()) {
    if (const char* root = std::getenv("TMR_OUT_ROOT")) out = std::filesystem::path(root) / out;
  }
  return out;
}

}  // namespace tmr
