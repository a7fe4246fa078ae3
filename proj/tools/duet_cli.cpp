// Command-line front end: prepare, train, evaluate, predict, sweep, synth.
// Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

#include <CLI11.hpp>
#include <iostream>

#include "duet/cli.hpp"

namespace {

using duet::RunConfig;

struct TrainOverrides {
  std::optional<std::size_t> epochs, dim_word, dim_entity, desc_len, batch_size;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;

  void attach(CLI::App* cmd) {
    cmd->add_option("--epochs", epochs, "Training epochs");
    cmd->add_option("--lr", lr, "Adam learning rate");
    cmd->add_option("--dim-word", dim_word, "Word embedding width (and CNN filters)");
    cmd->add_option("--dim-entity", dim_entity, "Entity embedding width");
    cmd->add_option("--desc-len", desc_len, "Description length in tokens");
    cmd->add_option("--batch-size", batch_size, "Mini-batch size");
    cmd->add_option("--seed", seed, "Root random seed");
  }

  RunConfig resolve(const std::string& config_path) const {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (epochs) cfg.train.epochs = *epochs;
    if (lr) cfg.train.lr = *lr;
    if (dim_word) cfg.train.local.dim_word = *dim_word;
    if (dim_entity) cfg.train.global.dim_entity = *dim_entity;
    if (desc_len) cfg.text.desc_len = *desc_len;
    if (batch_size) cfg.train.batch_size = *batch_size;
    if (seed) cfg.train.seed = *seed;
    cfg.validate();
    return cfg;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Duet knowledge-aware recommender: preprocessing, training, evaluation"};
  app.require_subcommand(1);

  duet::PrepareArgs prep;
  std::string triples;
  auto* prepare = app.add_subcommand("prepare", "Binarize, k-core filter, split and encode a raw dataset");
  prepare->add_option("--interactions", prep.interactions, "interactions.tsv")->required()->check(CLI::ExistingFile);
  prepare->add_option("--items", prep.items, "items.jsonl")->required()->check(CLI::ExistingFile);
  prepare->add_option("--triples", triples, "triples.tsv")->check(CLI::ExistingFile);
  prepare->add_option("--out", prep.out, "Output directory")->required();
  prepare->add_option("--kcore", prep.config.split.kcore, "Minimum user and item degree")->capture_default_str();
  prepare->add_option("--threshold", prep.config.split.positive_threshold, "Lowest positive rating")->capture_default_str();
  prepare->add_option("--split", prep.config.split.train_fraction, "Train fraction")->capture_default_str();
  prepare->add_option("--seed", prep.config.split.seed, "Split and negative-sampling seed")->capture_default_str();
  prepare->add_option("--min-count", prep.config.min_count, "Vocabulary frequency floor")->capture_default_str();

  std::string data, out, config, checkpoint, user, mode = "duet", param, values;
  std::size_t topk = 10;
  TrainOverrides overrides;

  auto* train = app.add_subcommand("train", "Train the joint model on a prepared dataset");
  train->add_option("--data", data, "Prepared dataset directory")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", out, "Run directory")->required();
  train->add_option("--config", config, "Config file with [data] [local] [global] [train] [eval] sections")
      ->check(CLI::ExistingFile);
  overrides.attach(train);

  auto* evaluate = app.add_subcommand("evaluate", "Score the test split and write report.json / report.csv");
  evaluate->add_option("--data", data, "Prepared dataset directory")->required()->check(CLI::ExistingDirectory);
  evaluate->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--out", out, "Report directory")->required();
  evaluate->add_option("--mode", mode, "duet, local (global pinned to 0.5) or global (local pinned)")
      ->check(CLI::IsMember({"duet", "local", "global"}))
      ->capture_default_str();

  auto* predict = app.add_subcommand("predict", "Top-k unseen items for one user");
  predict->add_option("--checkpoint", checkpoint, "checkpoint.bin")->required()->check(CLI::ExistingFile);
  predict->add_option("--data", data, "Prepared dataset directory")->required()->check(CLI::ExistingDirectory);
  predict->add_option("--user", user, "User id")->required();
  predict->add_option("--topk", topk, "Rows to print")->capture_default_str()->check(CLI::PositiveNumber);

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate once per parameter value");
  sweep->add_option("--param", param, "Parameter to vary")
      ->required()
      ->check(CLI::IsMember(duet::sweep_parameters()));
  sweep->add_option("--values", values, "Comma-separated values")->required();
  sweep->add_option("--data", data, "Prepared dataset directory")->required()->check(CLI::ExistingDirectory);
  sweep->add_option("--out", out, "Output directory")->required();
  sweep->add_option("--config", config, "Base config file")->check(CLI::ExistingFile);
  overrides.attach(sweep);

  duet::SynthConfig sc;
  auto* synth = app.add_subcommand("synth", "Generate a topic-planted synthetic dataset");
  synth->add_option("--out", out, "Output directory")->required();
  synth->add_option("--users", sc.n_users)->capture_default_str();
  synth->add_option("--items", sc.n_items)->capture_default_str();
  synth->add_option("--topics", sc.n_topics)->capture_default_str();
  synth->add_option("--interactions-per-user", sc.interactions_per_user)->capture_default_str();
  synth->add_option("--vocab-per-topic", sc.vocab_per_topic)->capture_default_str();
  synth->add_option("--kg-entities-per-topic", sc.kg_entities_per_topic)->capture_default_str();
  synth->add_option("--noise", sc.noise_rate)->capture_default_str();
  synth->add_option("--seed", sc.seed)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*prepare) {
      if (!triples.empty()) prep.triples = triples;
      const auto stats = duet::cmd_prepare(prep);
      std::cerr << "prepared " << stats.n_users << " users, " << stats.n_items << " items, " << stats.n_interactions
                << " interactions\n";
    } else if (*train) {
      const RunConfig cfg = overrides.resolve(config);
      std::cerr << "config " << cfg.hash() << "\n";
      duet::cmd_train(data, out, cfg, &std::cerr);
    } else if (*evaluate) {
      const auto m = mode == "local" ? duet::FusionMode::kLocalOnly
                     : mode == "global" ? duet::FusionMode::kGlobalOnly
                                        : duet::FusionMode::kDuet;
      std::cout << duet::cmd_evaluate(data, checkpoint, out, m).to_json();
    } else if (*predict) {
      std::cout << duet::format_predictions(duet::cmd_predict(data, checkpoint, user, topk));
    } else if (*sweep) {
      std::vector<std::string> list;
      std::stringstream ss(values);
      for (std::string v; std::getline(ss, v, ',');)
        if (!v.empty()) list.push_back(v);
      duet::cmd_sweep(data, out, param, list, overrides.resolve(config), &std::cerr);
    } else if (*synth) {
      duet::cmd_synth(sc, out);
    }
  } catch (const duet::ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
