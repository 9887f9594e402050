// sanar: single entry-point binary for the full-line completion toolkit.
//
// Subcommands: lex, build-data, train, complete, eval, bench, dam,
// order-study.  Exit codes: 0 success, 2 usage error (with a usage hint),
// 1 runtime error (with a diagnostic naming the offending input).  Every
// randomized command honors --seed, so reruns produce byte-identical
// artifacts.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sanar/checkpoint.hpp"
#include "sanar/corpus.hpp"
#include "sanar/dam.hpp"
#include "sanar/decode.hpp"
#include "sanar/error.hpp"
#include "sanar/lexer.hpp"
#include "sanar/metrics.hpp"
#include "sanar/model.hpp"
#include "sanar/run_config.hpp"
#include "sanar/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

// A post-parse condition that is the caller's mistake (bad flag combination
// or value); reported like CLI11 parse errors with exit code 2.
struct CliUsage : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw sanar::IoError("cannot open: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw sanar::IoError("cannot open for writing: " + path);
  out << text;
  if (!out) throw sanar::IoError("write failed: " + path);
}

// ---------------------------------------------------------------------------
// Shared option bundles.

struct ConfigArgs {
  std::string config_path;
  // (key, value) pairs in command-line order; applied after the file.
  std::vector<std::pair<std::string, std::string>> overrides;
};

// One override flag per run-config key, named exactly like the file key.
void add_config_options(CLI::App* sub, ConfigArgs& args) {
  sub->add_option("--config", args.config_path,
                  "JSON config file (flat object of the keys below)");
  for (const auto& key : sanar::run_config_keys()) {
    sub->add_option_function<std::string>(
        "--" + key,
        [key, &args](const std::string& v) {
          args.overrides.emplace_back(key, v);
        },
        "override config key '" + key + "'");
  }
}

// Flag values must parse even before the file is consulted; a bad value is
// a usage error, not a runtime one.
void check_overrides(const ConfigArgs& args) {
  sanar::RunConfig scratch;
  for (const auto& [key, value] : args.overrides) {
    try {
      sanar::set_config_field(scratch, key, value);
    } catch (const sanar::Error& e) {
      throw CliUsage(e.what());
    }
  }
}

struct DataDir {
  sanar::Vocabulary vocab;
  sanar::Dataset train;
  sanar::Dataset test;
};

sanar::Vocabulary load_vocab_file(const std::string& path) {
  return sanar::load_vocabulary(path);
}

DataDir load_data_dir(const std::string& dir, bool want_train,
                      bool want_test) {
  DataDir d;
  d.vocab = load_vocab_file((fs::path(dir) / "vocab.json").string());
  if (want_train)
    d.train = sanar::read_dataset((fs::path(dir) / "train.jsonl").string());
  if (want_test)
    d.test = sanar::read_dataset((fs::path(dir) / "test.jsonl").string());
  return d;
}

void check_vocab_hash(const sanar::Vocabulary& vocab, std::uint64_t ckpt_hash,
                      const std::string& ckpt_path) {
  if (vocab.hash() != ckpt_hash)
    throw sanar::Error("vocabulary mismatch: checkpoint " + ckpt_path +
                       " was trained with a different vocabulary (hash " +
                       std::to_string(ckpt_hash) + " != " +
                       std::to_string(vocab.hash()) + ")");
}

// ---------------------------------------------------------------------------
// lex

struct LexArgs {
  std::string path;
  std::string lang = "python";
  std::string out;
  bool verbose = false;
};

int cmd_lex(const LexArgs& a) {
  const sanar::Language lang = sanar::language_from_string(a.lang);
  const sanar::LexedFile lexed = sanar::lex(slurp(a.path), lang);
  if (a.verbose)
    for (const auto& w : lexed.warnings) std::cerr << "sanar: lex: " << w << "\n";

  std::ostringstream out;
  for (const auto& line : lexed.lines) {
    json rec;
    rec["line_no"] = line.empty() ? 0 : line.front().line_no;
    json toks = json::array();
    for (const auto& t : line)
      toks.push_back({{"t", t.text}, {"y", sanar::to_string(t.stype)}});
    rec["tokens"] = std::move(toks);
    out << rec.dump() << "\n";
  }
  if (a.out.empty())
    std::cout << out.str();
  else
    write_text(a.out, out.str());
  return 0;
}

// ---------------------------------------------------------------------------
// build-data

struct BuildDataArgs {
  std::string dir;
  std::string lang = "python";
  std::size_t window = 10;
  std::size_t vocab_size = 8000;
  std::size_t max_context = 128;
  std::size_t max_target = 32;
  unsigned test_percent = 10;
  std::string out;
  bool verbose = false;
};

int cmd_build_data(const BuildDataArgs& a) {
  const sanar::Language lang = sanar::language_from_string(a.lang);
  const std::string ext = a.lang == "python" ? ".py" : ".java";

  if (!fs::is_directory(a.dir))
    throw sanar::IoError("not a directory: " + a.dir);

  // Deterministic file order regardless of directory enumeration order.
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(a.dir))
    if (entry.is_regular_file() && entry.path().extension() == ext)
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw sanar::EmptyCorpus("no " + ext + " files under " + a.dir);

  std::vector<sanar::ExamplePair> train_raw, test_raw;
  std::size_t test_files = 0;
  for (const auto& path : files) {
    const sanar::LexedFile lexed = sanar::lex(slurp(path.string()), lang);
    if (a.verbose)
      for (const auto& w : lexed.warnings)
        std::cerr << "sanar: " << path.string() << ": " << w << "\n";
    auto pairs = sanar::build_pairs(lexed, a.window);
    const bool is_test =
        sanar::is_test_file(path.filename().string(), a.test_percent);
    test_files += is_test ? 1 : 0;
    auto& sink = is_test ? test_raw : train_raw;
    sink.insert(sink.end(), std::make_move_iterator(pairs.begin()),
                std::make_move_iterator(pairs.end()));
  }
  if (train_raw.empty())
    throw sanar::EmptyCorpus("no training pairs: corpus has no file with more than " +
                             std::to_string(a.window) + " lines in the train split");

  // The vocabulary sees only the training split, mirroring deployment.
  const sanar::Vocabulary vocab = sanar::build_vocabulary(train_raw, a.vocab_size);

  auto encode_all = [&](const std::vector<sanar::ExamplePair>& raw,
                        std::size_t* skipped) {
    std::vector<sanar::EncodedPair> out;
    out.reserve(raw.size());
    for (const auto& p : raw) {
      auto enc = sanar::encode_pair(p, vocab, a.max_context, a.max_target);
      if (enc)
        out.push_back(std::move(*enc));
      else
        ++*skipped;
    }
    return out;
  };

  std::size_t skipped = 0;
  sanar::Dataset train{a.window, encode_all(train_raw, &skipped)};
  sanar::Dataset test{a.window, encode_all(test_raw, &skipped)};

  fs::create_directories(a.out);
  sanar::write_dataset((fs::path(a.out) / "train.jsonl").string(), train);
  sanar::write_dataset((fs::path(a.out) / "test.jsonl").string(), test);
  sanar::save_vocabulary(vocab, (fs::path(a.out) / "vocab.json").string());

  std::cout << "files=" << files.size() << " (test files=" << test_files
            << ") train_pairs=" << train.pairs.size()
            << " test_pairs=" << test.pairs.size()
            << " vocab=" << vocab.size()
            << " skipped_long_targets=" << skipped << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  ConfigArgs config;
  std::string data;
  std::string out;
  bool verbose = false;
};

sanar::RunConfig resolve_config(const ConfigArgs& args) {
  check_overrides(args);
  return sanar::load_config(args.config_path, args.overrides);
}

int cmd_train(const TrainArgs& a) {
  sanar::RunConfig rc = resolve_config(a.config);
  rc.train.validate();

  DataDir data = load_data_dir(a.data, /*want_train=*/true, /*want_test=*/false);
  if (rc.model.vocab_size == 0) rc.model.vocab_size = data.vocab.size();
  rc.model.validate();

  sanar::Model<float> model(rc.kind, rc.model, rc.train.seed);
  std::function<void(const sanar::StepMetrics&)> on_step;
  if (a.verbose)
    on_step = [](const sanar::StepMetrics& m) {
      if (m.step % 50 == 0 || m.step == 1)
        std::cerr << "step " << m.step << " loss " << m.loss << " lr " << m.lr
                  << "\n";
    };
  const sanar::TrainResult res = sanar::train_model(
      model, data.train.pairs, rc.train, a.out, data.vocab.hash(), on_step);

  std::cout << "kind=" << sanar::to_string(rc.kind)
            << " steps=" << res.steps_taken
            << " final_loss=" << (res.steps.empty() ? 0.0 : res.steps.back().loss)
            << " stopped_early=" << (res.stopped_early ? "yes" : "no");
  if (!res.em_probes.empty())
    std::cout << " last_train_em=" << res.em_probes.back().second;
  std::cout << " out=" << a.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// complete

struct CompleteArgs {
  std::string ckpt;
  std::string vocab_path;
  bool use_stdin = false;
  std::string context_file;
  std::string lang = "python";
  std::size_t max_context = 128;
  bool verbose = false;
};

int cmd_complete(const CompleteArgs& a) {
  if (a.use_stdin == !a.context_file.empty())
    throw CliUsage("complete: pass exactly one of --stdin or --context-file");

  sanar::LoadedModel loaded = sanar::load_checkpoint(a.ckpt);
  const sanar::Vocabulary vocab = load_vocab_file(a.vocab_path);
  check_vocab_hash(vocab, loaded.vocab_hash, a.ckpt);

  std::string source;
  if (a.use_stdin) {
    std::ostringstream buf;
    buf << std::cin.rdbuf();
    source = buf.str();
  } else {
    source = slurp(a.context_file);
  }

  const sanar::Language lang = sanar::language_from_string(a.lang);
  const sanar::LexedFile lexed = sanar::lex(source, lang);

  std::vector<int> ids;
  for (const auto& line : lexed.lines)
    for (const auto& t : line) ids.push_back(vocab.encode(t.text));

  // Keep the most recent tokens; the model additionally caps the context at
  // max_positions - 1 (one slot goes to the length-query token).
  const std::size_t cap =
      std::min(a.max_context, loaded.model->config().max_positions - 1);
  if (ids.size() > cap)
    ids.erase(ids.begin(), ids.end() - static_cast<std::ptrdiff_t>(cap));

  std::vector<int> context_ids;
  context_ids.reserve(ids.size() + 1);
  context_ids.push_back(sanar::Vocabulary::kLength);
  context_ids.insert(context_ids.end(), ids.begin(), ids.end());

  const sanar::DecodeResult res = sanar::complete_any(*loaded.model, context_ids);
  std::string out;
  for (std::size_t i = 0; i < res.tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.decode(res.tokens[i]);
  }
  std::cout << out << "\n";
  if (a.verbose)
    std::cerr << "predicted_length=" << res.predicted_length
              << " latency_ns=" << res.latency_ns << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string ckpt;
  std::string data;
  std::string report;
  std::string split = "test";
  bool verbose = false;
};

int cmd_eval(const EvalArgs& a) {
  sanar::LoadedModel loaded = sanar::load_checkpoint(a.ckpt);
  const sanar::Vocabulary vocab =
      load_vocab_file((fs::path(a.data) / "vocab.json").string());
  check_vocab_hash(vocab, loaded.vocab_hash, a.ckpt);
  const sanar::Dataset ds =
      sanar::read_dataset((fs::path(a.data) / (a.split + ".jsonl")).string());

  const sanar::EvalReport r = sanar::evaluate(*loaded.model, ds.pairs, vocab);

  json j;
  j["examples"] = ds.pairs.size();
  j["em"] = r.em;
  j["bleu"] = r.bleu;
  j["es"] = r.es;
  j["repetition_ratio"] = r.repetition_ratio;
  j["mean_latency_ns"] = r.mean_latency_ns;
  j["speedup_vs_ar"] = r.speedup_vs_ar;
  write_text(a.report, j.dump(2) + "\n");

  std::cout << "examples=" << ds.pairs.size() << " em=" << r.em
            << " bleu=" << r.bleu << " es=" << r.es
            << " repetition_ratio=" << r.repetition_ratio
            << " mean_latency_ns=" << r.mean_latency_ns << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// bench

struct BenchArgs {
  std::string ckpt;
  std::string data;
  std::string mode;
  std::size_t min_target_len = 0;
  std::size_t warmup = 10;
  std::string report;
  std::string split = "test";
  bool verbose = false;
};

sanar::ModelKind kind_for_mode(const std::string& mode) {
  if (mode == "nar") return sanar::ModelKind::Nar;
  if (mode == "ar-l2r") return sanar::ModelKind::ArL2R;
  if (mode == "ar-r2l") return sanar::ModelKind::ArR2L;
  throw CliUsage("bench: --mode must be one of nar, ar-l2r, ar-r2l");
}

int cmd_bench(const BenchArgs& a) {
  const sanar::ModelKind want = kind_for_mode(a.mode);
  sanar::LoadedModel loaded = sanar::load_checkpoint(a.ckpt);
  if (loaded.model->kind() != want)
    throw sanar::Error("bench: checkpoint " + a.ckpt + " holds a " +
                       sanar::to_string(loaded.model->kind()) +
                       " model, but --mode asked for " +
                       sanar::to_string(want));
  const sanar::Dataset ds =
      sanar::read_dataset((fs::path(a.data) / (a.split + ".jsonl")).string());

  const sanar::LatencyStats stats =
      sanar::latency_bench(*loaded.model, ds.pairs, a.min_target_len, a.warmup);

  // Rebuild the filtered order so each timing row carries its target length.
  std::ostringstream csv;
  csv << "index,true_length,latency_ns\n";
  std::size_t row = 0;
  for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
    if (static_cast<std::size_t>(ds.pairs[i].true_length) < a.min_target_len)
      continue;
    char line[96];
    std::snprintf(line, sizeof line, "%zu,%d,%.17g\n", i,
                  ds.pairs[i].true_length, stats.per_example_ns[row]);
    csv << line;
    ++row;
  }
  write_text(a.report, csv.str());

  std::cout << "mode=" << a.mode << " examples=" << stats.examples
            << " mean_latency_ns=" << stats.mean_latency_ns << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// dam

struct DamArgs {
  ConfigArgs config;
  std::string data;
  std::string mask_probs = "0.15,0.35,0.5";
  std::string attn_agg = "mean";
  std::string report;
  std::string out = "dam-work";
  bool verbose = false;
};

std::vector<double> parse_mask_probs(const std::string& csv) {
  std::vector<double> probs;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      const double p = std::stod(item, &pos);
      if (pos != item.size()) throw std::invalid_argument(item);
      probs.push_back(p);
    } catch (const std::exception&) {
      throw CliUsage("dam: cannot parse mask probability '" + item + "'");
    }
    if (probs.back() <= 0.0 || probs.back() > 1.0)
      throw CliUsage("dam: mask probabilities must lie in (0, 1]");
  }
  if (probs.empty()) throw CliUsage("dam: --mask-probs must name at least one value");
  return probs;
}

int cmd_dam(const DamArgs& a) {
  const std::vector<double> probs = parse_mask_probs(a.mask_probs);
  sanar::AttnAgg agg;
  try {
    agg = sanar::attn_agg_from_string(a.attn_agg);
  } catch (const sanar::Error& e) {
    throw CliUsage(e.what());
  }

  sanar::RunConfig rc = resolve_config(a.config);
  rc.train.validate();

  DataDir data = load_data_dir(a.data, /*want_train=*/true, /*want_test=*/true);
  if (rc.model.vocab_size == 0) rc.model.vocab_size = data.vocab.size();
  rc.model.validate();

  const sanar::DensityReport rep = sanar::density_ratio_curve(
      data.train.pairs, data.test.pairs, rc.model, rc.train, probs, agg, a.out,
      data.vocab.hash());

  json j;
  j["agg"] = sanar::to_string(rep.agg);
  json points = json::array();
  for (const auto& pt : rep.points) {
    json p;
    p["mask_prob"] = pt.mask_prob;
    p["ratio"] = pt.ratio;
    p["masked_count"] = pt.masked_count;
    p["alphas"] = pt.alphas;
    points.push_back(std::move(p));
  }
  j["points"] = std::move(points);
  write_text(a.report, j.dump(2) + "\n");

  for (const auto& pt : rep.points)
    std::cout << "P=" << pt.mask_prob << " R=" << pt.ratio
              << " masked=" << pt.masked_count << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// order-study

struct OrderStudyArgs {
  ConfigArgs config;
  std::string data;
  std::string report;
  std::string l2r_ckpt;
  std::string r2l_ckpt;
  std::string out = "order-work";
  bool verbose = false;
};

int cmd_order_study(const OrderStudyArgs& a) {
  if (a.l2r_ckpt.empty() != a.r2l_ckpt.empty())
    throw CliUsage("order-study: pass both --l2r and --r2l, or neither");

  DataDir data = load_data_dir(a.data, /*want_train=*/a.l2r_ckpt.empty(),
                               /*want_test=*/true);

  std::unique_ptr<sanar::Model<float>> l2r, r2l;
  if (!a.l2r_ckpt.empty()) {
    sanar::LoadedModel ml = sanar::load_checkpoint(a.l2r_ckpt);
    check_vocab_hash(data.vocab, ml.vocab_hash, a.l2r_ckpt);
    sanar::LoadedModel mr = sanar::load_checkpoint(a.r2l_ckpt);
    check_vocab_hash(data.vocab, mr.vocab_hash, a.r2l_ckpt);
    l2r = std::move(ml.model);
    r2l = std::move(mr.model);
  } else {
    sanar::RunConfig rc = resolve_config(a.config);
    rc.train.validate();
    if (rc.model.vocab_size == 0) rc.model.vocab_size = data.vocab.size();
    rc.model.validate();

    l2r = std::make_unique<sanar::Model<float>>(sanar::ModelKind::ArL2R,
                                                rc.model, rc.train.seed);
    sanar::train_model(*l2r, data.train.pairs, rc.train,
                       (fs::path(a.out) / "l2r").string(), data.vocab.hash());
    r2l = std::make_unique<sanar::Model<float>>(sanar::ModelKind::ArR2L,
                                                rc.model, rc.train.seed);
    sanar::train_model(*r2l, data.train.pairs, rc.train,
                       (fs::path(a.out) / "r2l").string(), data.vocab.hash());
  }

  const sanar::OrderStudyReport rep =
      sanar::order_study(*l2r, *r2l, data.test.pairs, data.vocab);

  json j;
  j["examples"] = rep.examples;
  j["only_l2r_em"] = rep.only_l2r_em;
  j["only_r2l_em"] = rep.only_r2l_em;
  j["both_em"] = rep.both_em;
  j["neither_em"] = rep.neither_em;
  j["only_l2r_es"] = rep.only_l2r_es;
  j["only_r2l_es"] = rep.only_r2l_es;
  j["both_es"] = rep.both_es;
  j["neither_es"] = rep.neither_es;
  write_text(a.report, j.dump(2) + "\n");

  std::cout << "examples=" << rep.examples << " em(only_l2r=" << rep.only_l2r_em
            << " only_r2l=" << rep.only_r2l_em << " both=" << rep.both_em
            << " neither=" << rep.neither_em << ")\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  // Default to one BLAS thread for reproducible, contention-free kernels;
  // --threads (or SANAR_THREADS) overrides before the first kernel runs.
  setenv("OPENBLAS_NUM_THREADS", "1", /*overwrite=*/0);

  CLI::App app{
      "sanar: syntax-aware parallel full-line code completion toolkit"};
  app.require_subcommand(1);
  unsigned threads = 0;
  bool verbose = false;
  app.add_option("--threads", threads,
                 "BLAS thread count (default 1; env SANAR_THREADS is the "
                 "fallback when the flag is absent)");
  app.add_flag("--verbose", verbose, "chatty diagnostics on stderr");

  LexArgs lex_args;
  auto* lex_cmd = app.add_subcommand("lex", "tokenize a source file to JSON lines");
  lex_cmd->fallthrough();
  lex_cmd->add_option("path", lex_args.path, "source file")->required();
  lex_cmd->add_option("--lang", lex_args.lang, "python|java");
  lex_cmd->add_option("--out", lex_args.out, "output file (default stdout)");

  BuildDataArgs bd_args;
  auto* bd_cmd = app.add_subcommand(
      "build-data", "lex a source tree into an encoded pair dataset");
  bd_cmd->fallthrough();
  bd_cmd->add_option("dir", bd_args.dir, "source tree root")->required();
  bd_cmd->add_option("--lang", bd_args.lang, "python|java");
  bd_cmd->add_option("--window", bd_args.window, "context lines per pair");
  bd_cmd->add_option("--vocab-size", bd_args.vocab_size, "max vocabulary size");
  bd_cmd->add_option("--max-context", bd_args.max_context,
                     "max context tokens kept (left-truncated)");
  bd_cmd->add_option("--max-target", bd_args.max_target,
                     "pairs with longer targets are skipped");
  bd_cmd->add_option("--test-percent", bd_args.test_percent,
                     "file-hash test split percentage [0,100]")
      ->check(CLI::Range(0u, 100u));
  bd_cmd->add_option("--out", bd_args.out, "output dataset directory")->required();

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "train a model variant");
  train_cmd->fallthrough();
  add_config_options(train_cmd, train_args.config);
  train_cmd->add_option("--data", train_args.data, "dataset directory")->required();
  train_cmd->add_option("--out", train_args.out, "checkpoint/metrics directory")
      ->required();

  CompleteArgs complete_args;
  auto* complete_cmd =
      app.add_subcommand("complete", "complete the next line for a context");
  complete_cmd->fallthrough();
  complete_cmd->add_option("--ckpt", complete_args.ckpt, "model checkpoint")
      ->required();
  complete_cmd->add_option("--vocab", complete_args.vocab_path,
                           "vocabulary file the model was trained with")
      ->required();
  complete_cmd->add_flag("--stdin", complete_args.use_stdin,
                         "read the context from standard input");
  complete_cmd->add_option("--context-file", complete_args.context_file,
                           "read the context from a file");
  complete_cmd->add_option("--lang", complete_args.lang, "python|java");
  complete_cmd->add_option("--max-context", complete_args.max_context,
                           "max context tokens kept");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "quality metrics on a dataset split");
  eval_cmd->fallthrough();
  eval_cmd->add_option("--ckpt", eval_args.ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--data", eval_args.data, "dataset directory")->required();
  eval_cmd->add_option("--report", eval_args.report, "output report JSON")
      ->required();
  eval_cmd->add_option("--split", eval_args.split, "train|test (default test)");

  BenchArgs bench_args;
  auto* bench_cmd =
      app.add_subcommand("bench", "single-threaded per-example decode latency");
  bench_cmd->fallthrough();
  bench_cmd->add_option("--ckpt", bench_args.ckpt, "model checkpoint")->required();
  bench_cmd->add_option("--data", bench_args.data, "dataset directory")->required();
  bench_cmd->add_option("--mode", bench_args.mode, "nar|ar-l2r|ar-r2l")->required();
  bench_cmd->add_option("--min-target-len", bench_args.min_target_len,
                        "skip examples with shorter targets");
  bench_cmd->add_option("--warmup", bench_args.warmup, "untimed warmup decodes");
  bench_cmd->add_option("--report", bench_args.report, "output CSV")->required();
  bench_cmd->add_option("--split", bench_args.split, "train|test (default test)");

  DamArgs dam_args;
  auto* dam_cmd = app.add_subcommand(
      "dam", "train masked-LM probes and report attention density ratios");
  dam_cmd->fallthrough();
  add_config_options(dam_cmd, dam_args.config);
  dam_cmd->add_option("--data", dam_args.data, "dataset directory")->required();
  dam_cmd->add_option("--mask-probs", dam_args.mask_probs,
                      "comma-separated masking probabilities");
  dam_cmd->add_option("--attn-agg", dam_args.attn_agg, "mean|last-layer");
  dam_cmd->add_option("--report", dam_args.report, "output report JSON")
      ->required();
  dam_cmd->add_option("--out", dam_args.out, "working directory for trained probes");

  OrderStudyArgs os_args;
  auto* os_cmd = app.add_subcommand(
      "order-study",
      "bucket test lines by which decoding direction completes them");
  os_cmd->fallthrough();
  add_config_options(os_cmd, os_args.config);
  os_cmd->add_option("--data", os_args.data, "dataset directory")->required();
  os_cmd->add_option("--report", os_args.report, "output report JSON")->required();
  os_cmd->add_option("--l2r", os_args.l2r_ckpt,
                     "existing left-to-right checkpoint (skips training)");
  os_cmd->add_option("--r2l", os_args.r2l_ckpt,
                     "existing right-to-left checkpoint (skips training)");
  os_cmd->add_option("--out", os_args.out,
                     "working directory when models are trained here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints the message and the --help hint
    return 2;
  }

  // --threads wins, then the SANAR_THREADS environment variable.
  if (threads > 0) {
    setenv("OPENBLAS_NUM_THREADS", std::to_string(threads).c_str(), 1);
  } else if (const char* env = std::getenv("SANAR_THREADS");
             env && *env != '\0') {
    setenv("OPENBLAS_NUM_THREADS", env, 1);
  }

  lex_args.verbose = bd_args.verbose = train_args.verbose = verbose;
  complete_args.verbose = eval_args.verbose = bench_args.verbose = verbose;
  dam_args.verbose = os_args.verbose = verbose;

  try {
    if (lex_cmd->parsed()) return cmd_lex(lex_args);
    if (bd_cmd->parsed()) return cmd_build_data(bd_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (complete_cmd->parsed()) return cmd_complete(complete_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args);
    if (bench_cmd->parsed()) return cmd_bench(bench_args);
    if (dam_cmd->parsed()) return cmd_dam(dam_args);
    if (os_cmd->parsed()) return cmd_order_study(os_args);
  } catch (const CliUsage& e) {
    std::cerr << "sanar: " << e.what() << "\nRun with --help for usage.\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "sanar: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
