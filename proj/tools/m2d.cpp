// Command-line front end: gen-data, train, eval, infer, inspect-map.
//
// Exit codes: 0 success, 2 usage or configuration error, 3 data error,
// 4 numeric failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "m2d/model.hpp"

namespace fs = std::filesystem;
using namespace m2d;

namespace {

struct CommonModelArgs {
  std::string config_path;
  std::string data_dir;
  std::vector<std::string> overrides;  // key=value
  bool seed_given = false;
  std::int64_t seed = 0;
};

void apply_overrides(Config& cfg, const CommonModelArgs& args) {
  // Seed precedence: flag > M2D_SEED > config file > default.
  if (const char* env = std::getenv("M2D_SEED")) {
    cfg.set("seed", env);
  }
  for (const auto& kv : args.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw UsageError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (args.seed_given) cfg.seed = static_cast<std::uint64_t>(args.seed);
  cfg.validate();
}

Config load_config(const CommonModelArgs& args, const std::string& fallback_path = "") {
  Config cfg;
  if (!args.config_path.empty()) {
    cfg = Config::load(args.config_path);
  } else if (!fallback_path.empty() && fs::exists(fallback_path)) {
    cfg = Config::load(fallback_path);
  } else {
    cfg = Config::desk();
  }
  apply_overrides(cfg, args);
  return cfg;
}

Vocabulary load_vocab(const std::string& data_dir) {
  return read_vocabulary((fs::path(data_dir) / "vocab.txt").string());
}

Model load_model(const Config& cfg, const Vocabulary& vocab, const std::string& checkpoint) {
  Model model = Model::init(cfg, vocab.size());
  load_checkpoint(model.params, checkpoint);
  return model;
}

std::vector<AnnotationRecord> load_split(const std::string& data_dir, const std::string& split) {
  if (split != "train" && split != "test") {
    throw UsageError("--split must be 'train' or 'test'");
  }
  return read_annotations((fs::path(data_dir) / ("annotations." + split + ".txt")).string());
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

std::string format_log_line(std::int64_t step, const LossReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%lld\t%.12g\t%.12g\t%.12g", static_cast<long long>(step),
                r.l_rec, r.l_rg_bce, r.total);
  return buf;
}

// ---------------------------------------------------------------------------
// subcommands

int cmd_gen_data(const SyntheticSpec& spec, const std::string& out_dir) {
  SyntheticCorpus corpus = generate_synthetic(spec);
  write_corpus(corpus, out_dir);
  std::printf("wrote %zu videos (%zu train / %zu test), dim %lld, vocab %lld tokens to %s\n",
              corpus.features.size(), corpus.train.size(), corpus.test.size(),
              static_cast<long long>(spec.feature_dim), static_cast<long long>(corpus.vocab.size()),
              out_dir.c_str());
  return 0;
}

int cmd_train(const CommonModelArgs& args, const std::string& out_dir) {
  Config cfg = load_config(args);
  const Vocabulary vocab = load_vocab(args.data_dir);
  const auto annotations = load_split(args.data_dir, "train");
  const auto records = to_train_view(annotations);

  Model model = Model::init(cfg, vocab.size());
  Optimizer opt = Optimizer::for_params(model.params, cfg.lr);
  FeatureStore store(args.data_dir);

  fs::create_directories(out_dir);
  cfg.save((fs::path(out_dir) / "config.cfg").string());
  std::ofstream log((fs::path(out_dir) / "train.log").string(), std::ios::trunc);
  if (!log) throw ParseError("train: cannot open log file in '" + out_dir + "'");

  TrainOptions options;
  options.out_dir = out_dir;
  options.on_step = [&](std::int64_t step, const LossReport& r) {
    const std::string line = format_log_line(step, r);
    log << line << "\n";
    std::cout << line << "\n";
  };
  run_training(model, opt, records, store, vocab, options);
  log.flush();
  std::printf("done: %lld steps, checkpoint %s\n", static_cast<long long>(cfg.steps),
              (fs::path(out_dir) / "final.m2dt").string().c_str());
  return 0;
}

int cmd_eval(const CommonModelArgs& args, const std::string& checkpoint,
             const std::string& split, std::string predictions_path, bool tsv) {
  const std::string ckpt_dir = fs::path(checkpoint).parent_path().string();
  Config cfg = load_config(args, (fs::path(ckpt_dir) / "config.cfg").string());
  const Vocabulary vocab = load_vocab(args.data_dir);
  Model model = load_model(cfg, vocab, checkpoint);
  FeatureStore store(args.data_dir);
  const auto records = load_split(args.data_dir, split);

  std::vector<std::vector<MomentPrediction>> predictions;
  EvalResult result = evaluate(model, records, store, vocab, &predictions);

  if (predictions_path.empty()) {
    predictions_path = (fs::path(ckpt_dir.empty() ? "." : ckpt_dir) / "predictions.tsv").string();
  }
  std::ofstream pf(predictions_path, std::ios::trunc);
  if (!pf) throw ParseError("eval: cannot write '" + predictions_path + "'");
  for (std::size_t q = 0; q < predictions.size(); ++q) {
    for (const auto& p : predictions[q]) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\n", q, p.interval.first,
                    p.interval.second, p.score);
      pf << buf;
    }
  }

  if (tsv) {
    for (const auto& e : result.entries) {
      std::printf("%d\t%.2f\t%.6f\t%lld\t%lld\n", e.top_n, e.min_tiou, e.recall,
                  static_cast<long long>(e.hits), static_cast<long long>(e.queries));
    }
  } else {
    std::printf("queries: %zu\n", records.size());
    std::printf("%-8s%10s%10s\n", "IoU", "R@1", "R@5");
    for (double m : {0.3, 0.5, 0.7}) {
      std::printf("%-8.1f%10.4f%10.4f\n", m, result.at(1, m).recall, result.at(5, m).recall);
    }
  }
  std::fprintf(stderr, "predictions written to %s\n", predictions_path.c_str());
  return 0;
}

int cmd_infer(const CommonModelArgs& args, const std::string& checkpoint,
              const std::string& video_id, const std::string& query_text) {
  const std::string ckpt_dir = fs::path(checkpoint).parent_path().string();
  Config cfg = load_config(args, (fs::path(ckpt_dir) / "config.cfg").string());
  const Vocabulary vocab = load_vocab(args.data_dir);
  Model model = load_model(cfg, vocab, checkpoint);
  FeatureStore store(args.data_dir);

  const Query query = tokenize(split_words(query_text), vocab);
  const auto moments = predict_moments(model, store.get(video_id), query);
  const std::size_t top = std::min<std::size_t>(5, moments.size());
  for (std::size_t i = 0; i < top; ++i) {
    std::printf("%.3f\t%.3f\t%.6f\n", moments[i].interval.first, moments[i].interval.second,
                moments[i].score);
  }
  return 0;
}

int cmd_inspect_map(const CommonModelArgs& args, const std::string& checkpoint,
                    const std::string& video_id, const std::string& query_text,
                    std::int64_t scale_index) {
  const std::string ckpt_dir = fs::path(checkpoint).parent_path().string();
  Config cfg = load_config(args, (fs::path(ckpt_dir) / "config.cfg").string());
  const Vocabulary vocab = load_vocab(args.data_dir);
  Model model = load_model(cfg, vocab, checkpoint);
  FeatureStore store(args.data_dir);

  if (scale_index < 0 || scale_index >= static_cast<std::int64_t>(cfg.scales.size())) {
    throw UsageError("inspect-map: scale index out of range");
  }
  const Query query = tokenize(split_words(query_text), vocab);
  const SampleForward fwd = forward_sample(model, store.get(video_id), query);
  const ScoreMap& sm = fwd.scales[static_cast<std::size_t>(scale_index)].scores;

  std::printf("scale %lld (N=%lld), rows = start clip, columns = end clip\n",
              static_cast<long long>(scale_index), static_cast<long long>(sm.side));
  for (std::int64_t x = 0; x < sm.side; ++x) {
    for (std::int64_t y = 0; y < sm.side; ++y) {
      if (y) std::printf(" ");
      if (sm.is_valid(x, y)) {
        std::printf("%6.4f", sm.at(x, y));
      } else {
        std::printf("     \xC2\xB7");
      }
    }
    std::printf("\n");
  }
  return 0;
}

int dispatch(int argc, char** argv) {
  CLI::App app{"multi-scale 2D temporal moment retrieval"};
  app.require_subcommand(1);

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic corpus");
  SyntheticSpec spec;
  std::string gen_out;
  std::int64_t gen_seed = 0;
  gen->add_option("--seed", gen_seed, "corpus seed");
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--n-videos", spec.n_videos, "number of videos");
  gen->add_option("--clips", spec.clips_per_video, "clips per video");
  gen->add_option("--dim", spec.feature_dim, "feature dimension");
  gen->add_option("--events", spec.n_event_types, "number of event types");
  gen->add_option("--sigma", spec.noise_sigma, "noise level");
  gen->add_option("--phrase-min", spec.phrase_len_min, "min phrase length");
  gen->add_option("--phrase-max", spec.phrase_len_max, "max phrase length");
  gen->add_option("--event-min", spec.event_len_min, "min event length (clips)");
  gen->add_option("--event-max", spec.event_len_max, "max event length (clips)");
  gen->add_option("--test-fraction", spec.test_fraction, "fraction of videos in the test split");
  gen->add_option("--seconds-per-clip", spec.seconds_per_clip, "seconds covered by one clip");

  // shared model/data options
  auto add_common = [](CLI::App* cmd, CommonModelArgs& args) {
    cmd->add_option("--config", args.config_path, "config file (key = value lines)");
    cmd->add_option("--data", args.data_dir, "corpus directory")->required();
    cmd->add_option("--set", args.overrides, "config override key=value")->take_all();
    auto* seed_opt = cmd->add_option("--seed", args.seed, "seed override");
    cmd->callback([seed_opt, &args]() { args.seed_given = seed_opt->count() > 0; });
  };

  auto* train = app.add_subcommand("train", "train on a corpus");
  CommonModelArgs train_args;
  std::string train_out;
  add_common(train, train_args);
  train->add_option("--out", train_out, "output directory")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  CommonModelArgs eval_args;
  std::string eval_ckpt, eval_split = "test", eval_predictions;
  bool eval_tsv = false;
  add_common(eval, eval_args);
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--split", eval_split, "annotation split (train|test)");
  eval->add_option("--predictions", eval_predictions, "predictions output path");
  eval->add_flag("--tsv", eval_tsv, "emit machine-readable metrics only");

  auto* infer = app.add_subcommand("infer", "rank moments for one query");
  CommonModelArgs infer_args;
  std::string infer_ckpt, infer_video, infer_query;
  add_common(infer, infer_args);
  infer->add_option("--checkpoint", infer_ckpt, "checkpoint file")->required();
  infer->add_option("--video", infer_video, "video id")->required();
  infer->add_option("--query", infer_query, "query text (space-separated tokens)")->required();

  auto* inspect = app.add_subcommand("inspect-map", "print one scale's score map");
  CommonModelArgs inspect_args;
  std::string ins_ckpt, ins_video, ins_query;
  std::int64_t ins_scale = 0;
  add_common(inspect, inspect_args);
  inspect->add_option("--checkpoint", ins_ckpt, "checkpoint file")->required();
  inspect->add_option("--video", ins_video, "video id")->required();
  inspect->add_option("--query", ins_query, "query text")->required();
  inspect->add_option("--scale", ins_scale, "scale index j");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  }

  if (gen->parsed()) {
    spec.seed = static_cast<std::uint64_t>(gen_seed);
    return cmd_gen_data(spec, gen_out);
  }
  if (train->parsed()) return cmd_train(train_args, train_out);
  if (eval->parsed()) return cmd_eval(eval_args, eval_ckpt, eval_split, eval_predictions, eval_tsv);
  if (infer->parsed()) return cmd_infer(infer_args, infer_ckpt, infer_video, infer_query);
  if (inspect->parsed()) {
    return cmd_inspect_map(inspect_args, ins_ckpt, ins_video, ins_query, ins_scale);
  }
  return 2;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return dispatch(argc, argv);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const VocabError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const DimensionError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const IndexError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const DegenerateInputError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
}
