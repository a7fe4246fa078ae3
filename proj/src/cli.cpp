#include "duet/cli.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "duet/numkit/checkpoint.hpp"

namespace duet {

namespace fs = std::filesystem;

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, r.ptr};
}

std::string read_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f || !(f << text)) throw IoError("cannot write " + p.string());
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) throw ConfigError("bad value '" + text + "' for " + key);
  return v;
}

/// One row of the config table: section, key, and accessors into RunConfig.
struct Field {
  const char* section;
  const char* key;
  std::string (*get)(const RunConfig&);
  void (*set)(RunConfig&, const std::string&);
};

#define DUET_SIZE_FIELD(sec, name, member)                                                                    \
  Field {                                                                                                     \
    sec, name, [](const RunConfig& c) { return std::to_string(c.member); },                                   \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<std::size_t>(sec "." name, v); }     \
  }
#define DUET_REAL_FIELD(sec, name, member)                                                                    \
  Field {                                                                                                     \
    sec, name, [](const RunConfig& c) { return shortest(c.member); },                                         \
        [](RunConfig& c, const std::string& v) { c.member = parse_number<double>(sec "." name, v); }          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> table{
      DUET_SIZE_FIELD("data", "title_len", text.title_len),
      DUET_SIZE_FIELD("data", "desc_len", text.desc_len),
      DUET_SIZE_FIELD("local", "dim_word", train.local.dim_word),
      DUET_SIZE_FIELD("local", "window", train.local.window),
      DUET_SIZE_FIELD("local", "dim_local", train.local.dim_local),
      DUET_SIZE_FIELD("local", "max_history", train.local.max_history),
      DUET_SIZE_FIELD("global", "dim_entity", train.global.dim_entity),
      DUET_SIZE_FIELD("global", "sample_size", train.global.sample_size),
      DUET_SIZE_FIELD("train", "epochs", train.epochs),
      DUET_SIZE_FIELD("train", "batch_size", train.batch_size),
      DUET_REAL_FIELD("train", "lr", train.lr),
      DUET_REAL_FIELD("train", "gamma", train.gamma),
      DUET_SIZE_FIELD("train", "neg_ratio", train.neg_ratio),
      Field{"train", "seed", [](const RunConfig& c) { return std::to_string(c.train.seed); },
            [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>("train.seed", v); }},
      DUET_SIZE_FIELD("eval", "neighbor_cap", train.global.eval_neighbor_cap),
  };
  return table;
}

#undef DUET_SIZE_FIELD
#undef DUET_REAL_FIELD

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct Sidecar {
  RunConfig config;
  std::string config_hash;
};

void write_sidecar(const fs::path& checkpoint, const RunConfig& cfg, const fs::path& data_dir) {
  nlohmann::ordered_json j;
  j["format"] = "duet-checkpoint-sidecar v1";
  j["config_hash"] = cfg.hash();
  j["config"] = cfg.to_ini();
  nlohmann::ordered_json train;
  train["epochs"] = cfg.train.epochs;
  train["batch_size"] = cfg.train.batch_size;
  train["lr"] = cfg.train.lr;
  train["gamma"] = cfg.train.gamma;
  train["neg_ratio"] = cfg.train.neg_ratio;
  train["sample_size"] = cfg.train.global.sample_size;
  train["seed"] = cfg.train.seed;
  train["dim_word"] = cfg.train.local.dim_word;
  train["dim_local"] = cfg.train.local.dim_local;
  train["dim_entity"] = cfg.train.global.dim_entity;
  train["desc_len"] = cfg.text.desc_len;
  j["train_config"] = train;
  const fs::path stats = data_dir / "stats.json";
  j["dataset_stats"] = fs::exists(stats) ? nlohmann::ordered_json::parse(read_file(stats)) : nlohmann::ordered_json();
  write_file(sidecar_path(checkpoint), j.dump(2) + "\n");
}

Sidecar read_sidecar(const fs::path& checkpoint) {
  const fs::path path = sidecar_path(checkpoint);
  if (!fs::exists(path)) throw CheckpointError("missing checkpoint sidecar " + path.string());
  try {
    const auto j = nlohmann::json::parse(read_file(path));
    if (j.value("format", "") != "duet-checkpoint-sidecar v1") {
      throw CheckpointError("unsupported sidecar format in " + path.string());
    }
    Sidecar s{RunConfig::from_ini(j.at("config").get<std::string>()), j.at("config_hash").get<std::string>()};
    if (s.config.hash() != s.config_hash) throw CheckpointError("sidecar config hash mismatch in " + path.string());
    return s;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("unreadable sidecar " + path.string() + ": " + e.what());
  }
}

}  // namespace

// ---------------------------------------------------------------------------

std::string RunConfig::to_ini() const {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (section != f.section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(*this) + "\n";
  }
  return out;
}

RunConfig RunConfig::from_ini(const std::string& text, const RunConfig& base) {
  boost::property_tree::ptree tree;
  std::istringstream in(text);
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg = base;
  for (const auto& [section, entries] : tree) {
    if (entries.empty() && !entries.data().empty()) throw ConfigError("key '" + section + "' outside any section");
    for (const auto& [key, value] : entries) {
      const auto it = std::find_if(fields().begin(), fields().end(),
                                   [&](const Field& f) { return f.section == section && f.key == key; });
      if (it == fields().end()) throw ConfigError("unknown config key " + section + "." + key);
      it->set(cfg, value.data());
    }
  }
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) { return from_ini(read_file(path)); }

std::string RunConfig::hash() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a64(to_ini())));
  return buf;
}

void RunConfig::validate() const {
  if (text.title_len == 0 || text.desc_len == 0) throw ConfigError("title_len and desc_len must be positive");
  train.validate();
}

const std::vector<std::string>& sweep_parameters() {
  static const std::vector<std::string> names{"desc_len", "dim_word", "dim_entity"};
  return names;
}

RunConfig with_parameter(RunConfig cfg, const std::string& param, const std::string& value) {
  const auto v = parse_number<std::size_t>(param, value);
  if (param == "desc_len") cfg.text.desc_len = v;
  else if (param == "dim_word") cfg.train.local.dim_word = v;
  else if (param == "dim_entity") cfg.train.global.dim_entity = v;
  else throw ConfigError("unknown sweep parameter '" + param + "' (expected desc_len, dim_word or dim_entity)");
  cfg.validate();
  return cfg;
}

fs::path sidecar_path(const fs::path& checkpoint) { return fs::path(checkpoint.string() + ".json"); }

// ---------------------------------------------------------------------------

DatasetStats cmd_prepare(const PrepareArgs& args) {
  const auto raw = load_interactions(args.interactions);
  const auto items = load_items(args.items);
  const auto kg = args.triples ? load_triples(*args.triples) : std::vector<KgTriple>{};
  const auto corpus = prepare_corpus(raw, items, kg, args.config);
  write_prepared(args.out, corpus, args.config);
  return corpus.stats;
}

TrainResult cmd_train(const fs::path& data_dir, const fs::path& out, const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  const Dataset data = load_prepared(data_dir, cfg.text);
  const auto urg = build_urg(data);
  fs::create_directories(out);
  write_file(out / "config.ini", cfg.to_ini());
  auto result = train(data, urg, cfg.train, [&](const EpochLog& e) {
    if (!progress) return;
    const std::string line = format_log(std::span(&e, 1));
    *progress << line.substr(line.find('\n') + 1) << std::flush;
  });
  save_checkpoint(out / kCheckpointFile, result.params);
  write_sidecar(out / kCheckpointFile, cfg, data_dir);
  write_file(out / "train_log.csv", format_log(result.log));
  return result;
}

LoadedRun load_run(const fs::path& data_dir, const fs::path& checkpoint) {
  auto tensors = load_tensors(checkpoint);
  const Sidecar side = read_sidecar(checkpoint);
  LoadedRun run{side.config, load_prepared(data_dir, side.config.text), {}, {}};
  run.urg = build_urg(run.data);
  run.params = init_duet_params(run.config.train, run.data, run.urg);
  assign_values(run.params, tensors);
  return run;
}

MetricsReport cmd_evaluate(const fs::path& data_dir, const fs::path& checkpoint, const fs::path& out, FusionMode mode) {
  const LoadedRun run = load_run(data_dir, checkpoint);
  MetricsReport report = evaluate(run.params, run.data, run.urg, run.config.train, mode);
  report.config_hash = run.config.hash();
  report.timestamp = utc_timestamp();
  fs::create_directories(out);
  write_file(out / "report.json", report.to_json());
  write_file(out / "report.csv", report.to_csv());
  return report;
}

std::vector<PredictRow> cmd_predict(const fs::path& data_dir, const fs::path& checkpoint, const std::string& user_id,
                                    std::size_t topk) {
  const LoadedRun run = load_run(data_dir, checkpoint);
  const Index user = run.data.users.at(user_id, "user");
  std::vector<bool> seen(run.data.n_items(), false);
  for (Index i : run.data.history[user]) seen[i] = true;
  std::vector<Interaction> pairs;
  for (Index i = 0; i < run.data.n_items(); ++i)
    if (!seen[i]) pairs.push_back({user, i});
  const auto preds = predict_pairs(run.params, run.data, run.urg, run.config.train, pairs);
  std::vector<PredictRow> rows;
  for (std::size_t k = 0; k < pairs.size(); ++k) rows.push_back({run.data.items.name(pairs[k].item), preds[k]});
  std::sort(rows.begin(), rows.end(), [](const PredictRow& a, const PredictRow& b) {
    return a.p.p_final != b.p.p_final ? a.p.p_final > b.p.p_final : a.item_id < b.item_id;
  });
  if (rows.size() > topk) rows.resize(topk);
  return rows;
}

std::string format_predictions(const std::vector<PredictRow>& rows) {
  std::string s = "item_id\tp_l\tp_g\tp_f\n";
  char buf[96];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "\t%.6f\t%.6f\t%.6f\n", r.p.p_local, r.p.p_global, r.p.p_final);
    s += r.item_id + buf;
  }
  return s;
}

std::vector<MetricsReport> cmd_sweep(const fs::path& data_dir, const fs::path& out, const std::string& param,
                                     const std::vector<std::string>& values, const RunConfig& base,
                                     std::ostream* progress) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<RunConfig> configs;
  for (const auto& v : values) configs.push_back(with_parameter(base, param, v));
  fs::create_directories(out);
  std::vector<MetricsReport> reports;
  std::string csv = "value,auc,mae,rmse,f1\n";
  for (std::size_t k = 0; k < values.size(); ++k) {
    const fs::path run_dir = out / (param + "=" + values[k]);
    if (progress) *progress << "sweep " << param << "=" << values[k] << "\n";
    cmd_train(data_dir, run_dir, configs[k], progress);
    reports.push_back(cmd_evaluate(data_dir, run_dir / kCheckpointFile, run_dir));
    const auto& r = reports.back();
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f\n", r.auc, r.mae, r.rmse, r.f1);
    csv += values[k] + buf;
  }
  write_file(out / "sweep.csv", csv);
  return reports;
}

void cmd_synth(const SynthConfig& cfg, const fs::path& out) { write_synth(out, generate(cfg)); }

}  // namespace duet
