// One PASS/FAIL line per acceptance criterion; exit status 0 only if all pass.
// Pass a scratch directory as argv[1] to keep the artifacts for inspection.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "duet/cli.hpp"
#include "duet/numkit/checkpoint.hpp"
#include "duet/numkit/grad_check.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace duet;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string without_timestamp(const std::string& json) { return json.substr(0, json.find("\"timestamp\"")); }

double bce(const Vector& z, const std::vector<double>& labels, Vector& dz) {
  double loss = 0;
  dz.resize(z.size());
  for (Eigen::Index b = 0; b < z.size(); ++b) {
    const double p = sigmoid(z[b]), y = labels[std::size_t(b)];
    loss -= y * std::log(p) + (1 - y) * std::log(1 - p);
    dz[b] = p - y;
  }
  return loss;
}

void randomize(ParamStore& s, Rng& rng, double lo, double hi, bool add) {
  for (auto& [name, p] : s)
    for (auto& v : p.value.values()) v = (add ? v : 0.0) + rng.uniform(lo, hi);
}

// 1 --------------------------------------------------------------------------

Verdict gradients() {
  const std::vector<double> labels{1, 0, 1, 0, 1, 1, 0, 1};
  Dataset d = fixture::toy_dataset(8, 12, 12, 5);
  d.kg = {{"i1", "genre", "g1"}, {"i2", "genre", "g1"}, {"i3", "by", "a1"}, {"i4", "by", "a1"}};
  const auto urg = build_urg(d);
  const std::vector<Interaction> batch{{0, 1}, {1, 2}, {2, 0}, {3, 7}, {4, 4}, {5, 5}, {6, 11}, {7, 3}};

  LocalConfig lc;
  lc.dim_word = 4, lc.dim_local = 5, lc.max_history = 6;
  ParamStore ls;
  Rng rng(1);
  init_local_params(ls, lc, d.vocab.size(), rng);
  randomize(ls, rng, -1, 1, false);
  const LocalModel local(lc);
  const LossFunction lf = [&](ParamStore& st, bool with_grad) {
    LocalBatchCache cache;
    Vector dz;
    const double loss = bce(local.forward(st, d, batch, &cache), labels, dz);
    if (with_grad) st.begin_backward(), local.backward(st, cache, dz);
    return loss;
  };

  GlobalConfig gc;
  gc.dim_entity = 4, gc.sample_size = 3;
  ParamStore gs;
  init_global_params(gs, gc, urg.n_entities(), urg.n_relations(), rng);
  randomize(gs, rng, -1, 1, false);
  const GlobalModel global(gc);
  const auto policy = NeighborPolicy::training(gc, 3, 0, 0);
  const LossFunction gf = [&](ParamStore& st, bool with_grad) {
    GlobalBatchCache cache;
    Vector dz;
    const double loss = bce(global.forward(st, urg, batch, policy, &cache), labels, dz);
    if (with_grad) st.begin_backward(), global.backward(st, cache, dz);
    return loss;
  };

  TrainConfig tc;
  tc.local = lc;
  tc.global = gc;
  ParamStore ds = init_duet_params(tc, d, urg);
  randomize(ds, rng, -0.5, 0.5, true);
  const DuetModel duet(tc, d, urg);
  const std::vector<std::uint8_t> ylab(labels.begin(), labels.end());
  const LossFunction df = [&](ParamStore& st, bool with_grad) { return duet.loss(st, batch, ylab, policy, with_grad); };

  const double el = grad_check(lf, ls, 1e-4, 40, 1);
  const double eg = grad_check(gf, gs, 1e-4, 40, 1);
  const double ed = grad_check(df, ds, 1e-4, 40, 1);
  return {el < 1e-4 && eg < 1e-4 && ed < 1e-4, fmt("max rel err local %.2e global %.2e duet %.2e", el, eg, ed)};
}

// 2 --------------------------------------------------------------------------

Verdict oracles() {
  Rng rng(2);
  int auc_bad = 0, kcore_bad = 0, cnn_bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + rng.uniform_int(199);
    std::vector<double> s(n);
    std::vector<int> y(n);
    std::vector<std::uint8_t> y8(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = double(rng.uniform_int(25)) / 25.0, y[i] = rng.coin();
    y[0] = 0, y[1] = 1;
    for (std::size_t i = 0; i < n; ++i) y8[i] = std::uint8_t(y[i]);
    auc_bad += auc(s, y8) != oracle::pairwise_auc(s, y);
  }
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t nu = 1 + rng.uniform_int(50), ni = 1 + rng.uniform_int(50);
    const double density = rng.uniform(0.02, 0.3);
    PositiveSet g;
    for (std::size_t u = 0; u < nu; ++u)
      for (std::size_t i = 0; i < ni; ++i)
        if (rng.uniform() < density) g.emplace("u" + std::to_string(u), "i" + std::to_string(i));
    const std::size_t k = rng.uniform_int(6);
    kcore_bad += kcore_filter(g, k) != oracle::kcore_peel(g, k);
  }
  LocalConfig lc;
  lc.dim_word = 6;
  for (int trial = 0; trial < 100; ++trial) {
    ParamStore s;
    init_local_params(s, lc, 20, rng);
    randomize(s, rng, -1, 1, false);
    std::vector<TokenId> toks(1 + rng.uniform_int(32));
    for (auto& t : toks) t = TokenId(rng.uniform_int(20));
    const Vector got = cnn_encode(toks, s, lc);
    std::vector<unsigned> padded(toks.begin(), toks.end());
    if (padded.size() < lc.window) padded.resize(lc.window, 0);
    const Tensor &emb = s.value("local.word_emb"), &W = s.value("local.cnn.W"), &b = s.value("local.cnn.b");
    const std::size_t h = lc.window, dw = lc.dim_word;
    for (std::size_t f = 0; f < lc.num_filters(); ++f) {
      const double want = oracle::max_window_response(
          padded, h, dw, [&](unsigned t, std::size_t k) { return emb[t * dw + k]; },
          [&](std::size_t o, std::size_t k) { return W[(f * h + o) * dw + k]; }, b[f]);
      if (std::abs(got[Eigen::Index(f)] - want) > 1e-12) {
        ++cnn_bad;
        break;
      }
    }
  }
  return {auc_bad + kcore_bad + cnn_bad == 0,
          fmt("mismatches auc %d/100 kcore %d/100 cnn %d/100", auc_bad, kcore_bad, cnn_bad)};
}

// 3 --------------------------------------------------------------------------

Verdict toy_margin() {
  std::vector<Triple> ts;
  for (const auto& [h, r, t] : fixture::toy_kg_triples()) ts.push_back({h, r, t});
  const auto g = UnifiedRelationGraph::from_triples(4, 2, ts);
  ParamStore s;
  Rng init(substream_seed(7, "init"));
  init_global_params(s, GlobalConfig{}, 4, 2, init);
  Rng rng(substream_seed(7, "kg"));
  for (int epoch = 0; epoch < 500; ++epoch) kg_train_epoch(s, g, 1.0, 256, AdamConfig{}, rng);
  int ok = 0, total = 0;
  Rng fresh(123);
  for (const auto& t : g.triples())
    for (int i = 0; i < 50; ++i, ++total) ok += transr_score(t, s) + 1.0 <= transr_score(corrupt_triple(t, g, fresh), s);
  const double frac = double(ok) / total;
  return {frac >= 0.9, fmt("%.1f%% of %d (true, fresh corruption) pairs satisfy the margin", 100 * frac, total)};
}

// 4-8 share the synthetic corpus ------------------------------------------------

struct Synthetic {
  fs::path root;
  std::vector<MetricsReport> reports;  // every evaluation, for the range check

  fs::path data() const { return root / "prep"; }
};

bool in_ranges(const MetricsReport& r) {
  try {
    r.check_ranges();
    return true;
  } catch (const std::exception&) {
    return false;
  }
}

double window_mean(const std::vector<EpochLog>& log, std::size_t from) {
  double s = 0;
  for (std::size_t e = from; e < from + 5; ++e) s += log[e].ce_loss;
  return s / 5;
}

std::pair<Verdict, Verdict> end_to_end(Synthetic& syn) {
  const RunConfig cfg;
  const TrainResult tr = cmd_train(syn.data(), syn.root / "run1", cfg);
  const fs::path ckpt = syn.root / "run1" / kCheckpointFile;
  const auto duet = cmd_evaluate(syn.data(), ckpt, syn.root / "run1");
  const LoadedRun run = load_run(syn.data(), ckpt);
  const auto local = evaluate(run.params, run.data, run.urg, run.config.train, FusionMode::kLocalOnly);
  const auto global = evaluate(run.params, run.data, run.urg, run.config.train, FusionMode::kGlobalOnly);
  syn.reports.insert(syn.reports.end(), {duet, local, global});

  const auto truth = GroundTruth::from_json(slurp(syn.root / "raw/ground_truth.json"));
  const double bayes = bayes_auc(truth, run.data, run.data.test);
  const auto& log = tr.log;
  const bool enough = log.size() >= 10;
  const double first = enough ? window_mean(log, 0) : NAN, last = enough ? window_mean(log, log.size() - 5) : NAN;
  Verdict v4{enough && duet.auc >= bayes - 0.10 && duet.auc >= 0.85 && last < first,
             fmt("test AUC %.4f, bayes %.4f, CE window mean %.4f -> %.4f over %zu epochs", duet.auc, bayes, first,
                 last, log.size())};
  const double best = std::max(local.auc, global.auc);
  Verdict v5{duet.auc >= best - 0.01,
             fmt("duet %.4f, local-only %.4f, global-only %.4f", duet.auc, local.auc, global.auc)};
  return {v4, v5};
}

Verdict determinism(Synthetic& syn) {
  const RunConfig cfg;
  cmd_train(syn.data(), syn.root / "run2", cfg);
  const bool same_ckpt =
      slurp(syn.root / "run1" / kCheckpointFile) == slurp(syn.root / "run2" / kCheckpointFile);
  syn.reports.push_back(cmd_evaluate(syn.data(), syn.root / "run2" / kCheckpointFile, syn.root / "run2"));
  const std::string a = slurp(syn.root / "run1/report.json"), b = slurp(syn.root / "run2/report.json");
  const bool same_report = !a.empty() && without_timestamp(a) == without_timestamp(b);
  return {same_ckpt && same_report, fmt("%zu-epoch runs: checkpoints %s, report.json %s", cfg.train.epochs,
                                        same_ckpt ? "identical" : "differ", same_report ? "identical" : "differ")};
}

Verdict sweep(Synthetic& syn, std::size_t epochs) {
  RunConfig base;
  base.train.epochs = epochs;
  const std::vector<std::string> values{"8", "24", "48"};
  const auto reports = cmd_sweep(syn.data(), syn.root / "sweep", "desc_len", values, base);
  syn.reports.insert(syn.reports.end(), reports.begin(), reports.end());
  const std::string csv = slurp(syn.root / "sweep/sweep.csv");
  const auto rows = std::count(csv.begin(), csv.end(), '\n') - 1;
  int matched = 0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    const fs::path dir = syn.root / ("standalone_" + values[k]);
    cmd_train(syn.data(), dir, with_parameter(base, "desc_len", values[k]));
    const auto r = cmd_evaluate(syn.data(), dir / kCheckpointFile, dir);
    syn.reports.push_back(r);
    matched += k < reports.size() && r.auc == reports[k].auc && r.mae == reports[k].mae &&
               r.rmse == reports[k].rmse && r.f1 == reports[k].f1 &&
               slurp(dir / kCheckpointFile) == slurp(syn.root / ("sweep/desc_len=" + values[k]) / kCheckpointFile);
  }
  return {rows == 3 && matched == 3, fmt("desc_len {8,24,48} at %zu epochs: %ld csv rows, %d/3 match standalone runs",
                                         epochs, long(rows), matched)};
}

Verdict format_fidelity(Synthetic& syn) {
  const LoadedRun run = load_run(syn.data(), syn.root / "run1" / kCheckpointFile);
  const fs::path copy = syn.root / "roundtrip.bin";
  save_checkpoint(copy, run.params);
  ParamStore reloaded = init_duet_params(run.config.train, run.data, run.urg);
  load_checkpoint(copy, reloaded);
  std::vector<Interaction> pairs;
  for (const auto& e : run.data.test) pairs.push_back({e.user, e.item});
  const auto a = predict_pairs(run.params, run.data, run.urg, run.config.train, pairs);
  const auto b = predict_pairs(reloaded, run.data, run.urg, run.config.train, pairs);
  std::size_t same = 0;
  for (std::size_t k = 0; k < a.size(); ++k)
    same += a[k].p_local == b[k].p_local && a[k].p_global == b[k].p_global && a[k].p_final == b[k].p_final;
  std::size_t ok = 0;
  for (const auto& r : syn.reports) ok += in_ranges(r);
  return {same == a.size() && !a.empty() && ok == syn.reports.size(),
          fmt("%zu/%zu predictions bit-identical after reload, %zu/%zu reports within metric ranges", same, a.size(),
              ok, syn.reports.size())};
}

void report(int n, const char* title, const std::function<Verdict()>& body, int& failures) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("%s criterion %d (%s): %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", n, title, v.detail.c_str(), sec);
  std::fflush(stdout);
  failures += !v.pass;
}

}  // namespace

int main(int argc, char** argv) {
  const bool keep = argc > 1;
  Synthetic syn{keep ? fs::path(argv[1]) : fs::temp_directory_path() / "duet_acceptance", {}};
  fs::remove_all(syn.root);
  fs::create_directories(syn.root);

  int failures = 0;
  report(1, "gradient correctness", gradients, failures);
  report(2, "oracle equivalence", oracles, failures);
  report(3, "toy graph margin", toy_margin, failures);

  Verdict v4{false, "synthetic setup failed"}, v5 = v4;
  try {
    cmd_synth(SynthConfig{}, syn.root / "raw");
    PrepareArgs args{syn.root / "raw/interactions.tsv", syn.root / "raw/items.jsonl", syn.root / "raw/triples.tsv",
                     syn.data(), {}};
    cmd_prepare(args);
  } catch (const std::exception& e) {
    v4.detail = v5.detail = std::string("exception: ") + e.what();
  }
  report(4, "end-to-end synthetic", [&] {
    auto [a, b] = end_to_end(syn);
    v5 = b;
    return a;
  }, failures);
  report(5, "duet vs ablations", [&] { return v5; }, failures);
  report(6, "determinism", [&] { return determinism(syn); }, failures);
  report(7, "sweep harness", [&] { return sweep(syn, 3); }, failures);
  report(8, "format fidelity", [&] { return format_fidelity(syn); }, failures);

  if (!keep) fs::remove_all(syn.root);
  std::printf("%d of 8 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
