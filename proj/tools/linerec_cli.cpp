// Command-line front end: dataset synthesis, the two training stages,
// evaluation, decoding, and overlay rendering. Every command is a pure
// function of (config, seed, inputs) and writes its effective settings next
// to its outputs, so runs can be reproduced byte for byte.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "linerec/config.hpp"
#include "linerec/glyphs.hpp"
#include "linerec/trainer.hpp"

namespace fs = std::filesystem;
using namespace linerec;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

ModelConfig model_from(const Config& c) {
  ModelConfig mc;
  mc.height = static_cast<int>(c.integer("model.height", mc.height));
  mc.n_cls = static_cast<int>(c.integer("model.n_cls", mc.n_cls));
  mc.c1 = static_cast<int>(c.integer("model.c1", mc.c1));
  mc.c2 = static_cast<int>(c.integer("model.c2", mc.c2));
  mc.c3 = static_cast<int>(c.integer("model.c3", mc.c3));
  mc.c4 = static_cast<int>(c.integer("model.c4", mc.c4));
  mc.head_ch = static_cast<int>(c.integer("model.head_ch", mc.head_ch));
  mc.cls_ch = static_cast<int>(c.integer("model.cls_ch", mc.cls_ch));
  mc.ctx_hidden = static_cast<int>(c.integer("model.ctx_hidden", mc.ctx_hidden));
  mc.init_seed = static_cast<uint64_t>(c.integer("model.init_seed", 1));
  const std::string input = c.str("model.input", "raster");
  if (input == "raster") mc.in_ch = 1;
  else if (input == "signature") mc.in_ch = kSigChannels;
  else throw std::runtime_error("config: model.input must be 'raster' or 'signature'");
  return mc;
}

void put_model(Config& eff, const ModelConfig& mc) {
  eff.set("model.height", mc.height);
  eff.set("model.n_cls", mc.n_cls);
  eff.set("model.c1", mc.c1);
  eff.set("model.c2", mc.c2);
  eff.set("model.c3", mc.c3);
  eff.set("model.c4", mc.c4);
  eff.set("model.head_ch", mc.head_ch);
  eff.set("model.cls_ch", mc.cls_ch);
  eff.set("model.ctx_hidden", mc.ctx_hidden);
  eff.set("model.init_seed", static_cast<unsigned long long>(mc.init_seed));
  eff.set("model.input", mc.in_ch == 1 ? "raster" : "signature");
}

StageOpts stage_from(const Config& c, const std::string& sec, long seed_override) {
  StageOpts o;
  o.iters = static_cast<int>(c.integer(sec + ".iters", 1000));
  o.batch = static_cast<int>(c.integer(sec + ".batch", 8));
  o.lr = c.real(sec + ".lr", 0.01);
  o.lr_decay = c.flag(sec + ".lr_decay", true);
  o.len_lo = static_cast<int>(c.integer(sec + ".len_lo", 8));
  o.len_hi = static_cast<int>(c.integer(sec + ".len_hi", 12));
  o.seed = static_cast<uint64_t>(seed_override >= 0 ? seed_override : c.integer(sec + ".seed", 1));
  o.log_every = static_cast<int>(c.integer(sec + ".log_every", 50));
  o.checkpoint_every = static_cast<int>(c.integer(sec + ".checkpoint_every", 200));
  return o;
}

void put_stage(Config& eff, const std::string& sec, const StageOpts& o) {
  eff.set(sec + ".iters", o.iters);
  eff.set(sec + ".batch", o.batch);
  eff.set(sec + ".lr", o.lr);
  eff.set(sec + ".lr_decay", o.lr_decay);
  eff.set(sec + ".len_lo", o.len_lo);
  eff.set(sec + ".len_hi", o.len_hi);
  eff.set(sec + ".seed", static_cast<unsigned long long>(o.seed));
  eff.set(sec + ".log_every", o.log_every);
  eff.set(sec + ".checkpoint_every", o.checkpoint_every);
}

DecodeParams decode_from(const Config& c) {
  DecodeParams p;
  p.loc_weight = c.real("decode.loc_weight", p.loc_weight);
  p.iou_thresh = c.real("decode.iou_thresh", p.iou_thresh);
  p.score_thresh = c.real("decode.score_thresh", p.score_thresh);
  p.lm_weight = c.real("decode.lm_weight", p.lm_weight);
  p.beam_width = static_cast<int>(c.integer("decode.beam_width", p.beam_width));
  return p;
}

void put_decode(Config& eff, const DecodeParams& p) {
  eff.set("decode.loc_weight", p.loc_weight);
  eff.set("decode.iou_thresh", p.iou_thresh);
  eff.set("decode.score_thresh", p.score_thresh);
  eff.set("decode.lm_weight", p.lm_weight);
  eff.set("decode.beam_width", p.beam_width);
}

void reject_unread(const Config& c) {
  const auto extra = c.unread();
  if (extra.empty()) return;
  std::string msg = "config contains settings this command does not know:";
  for (const auto& k : extra) msg += " " + k;
  throw std::runtime_error(msg);
}

NGramModel load_lm(const std::string& path, int n_cls) {
  if (path.size() >= 4 && path.substr(path.size() - 4) == ".txt")
    return NGramModel::train(load_corpus(path, n_cls), n_cls);
  return NGramModel::load(path);
}

// ---------------------------------------------------------------------- synth

int cmd_synth(const Config& cfg, const std::string& out_dir, long seed_override) {
  const int n_cls = static_cast<int>(cfg.integer("model.n_cls", 20));
  const int height = static_cast<int>(cfg.integer("model.height", 32));
  const int len_lo = static_cast<int>(cfg.integer("synth.len_lo", 8));
  const int len_hi = static_cast<int>(cfg.integer("synth.len_hi", 12));
  const long synth_val_n = cfg.integer("synth.synth_val_n", 40);
  const long real_train_n = cfg.integer("synth.real_train_n", 300);
  const long real_val_n = cfg.integer("synth.real_val_n", 80);
  const long corpus_n = cfg.integer("synth.corpus_n", 400);
  const double distort = cfg.real("synth.distort", 1.0);
  const bool online = cfg.flag("synth.online", false);
  const uint64_t seed =
      static_cast<uint64_t>(seed_override >= 0 ? seed_override : cfg.integer("synth.seed", 1));
  reject_unread(cfg);

  SynthParams clean = SynthParams::clean();
  SynthParams writer = SynthParams::writer(distort);
  clean.height = writer.height = height;

  Rng rng(seed);
  auto make_set = [&](const std::string& name, long n, const SynthParams& domain,
                      bool with_boxes) {
    std::vector<TextLineSample> samples;
    for (long i = 0; i < n; ++i) {
      const std::vector<int> text = chain_text(rng, n_cls, len_lo, len_hi);
      const uint64_t s = rng.next_u64();
      TextLineSample sample =
          online ? synth_online_line(text, s, domain) : synth_offline_line(text, s, domain);
      char id[64];
      std::snprintf(id, sizeof id, "%s-%04ld", name.c_str(), i);
      sample.id = id;
      samples.push_back(std::move(sample));
    }
    save_dataset((fs::path(out_dir) / name).string(), samples, with_boxes);
    std::cout << name << ": " << n << " lines\n";
  };
  fs::create_directories(out_dir);
  make_set("synth_val", synth_val_n, clean, true);
  make_set("real_train", real_train_n, writer, false);  // transcripts only
  make_set("real_val", real_val_n, writer, true);       // boxes kept for seg metrics
  std::vector<std::vector<int>> corpus;
  for (long i = 0; i < corpus_n; ++i) corpus.push_back(chain_text(rng, n_cls, len_lo, len_hi));
  write_corpus((fs::path(out_dir) / "corpus.txt").string(), corpus);
  std::cout << "corpus.txt: " << corpus_n << " lines\n";

  Config eff;
  eff.set("model.n_cls", n_cls);
  eff.set("model.height", height);
  eff.set("synth.len_lo", len_lo);
  eff.set("synth.len_hi", len_hi);
  eff.set("synth.synth_val_n", synth_val_n);
  eff.set("synth.real_train_n", real_train_n);
  eff.set("synth.real_val_n", real_val_n);
  eff.set("synth.corpus_n", corpus_n);
  eff.set("synth.distort", distort);
  eff.set("synth.online", online);
  eff.set("synth.seed", static_cast<unsigned long long>(seed));
  eff.save((fs::path(out_dir) / "effective_config.ini").string());
  return kExitOk;
}

// ------------------------------------------------------------- train stages

int run_stage(const Config& cfg, const std::string& sec, const std::string& out_dir,
              const std::string& init_ckpt, const std::string& data_dir, long seed_override,
              bool strip_ctx) {
  const ModelConfig mc = model_from(cfg);
  StageOpts o = stage_from(cfg, sec, seed_override);
  const bool is_weak = sec == "train";
  if (is_weak) {
    o.real_ratio = cfg.real("train.real_ratio", 0.5);
    o.use_conr = cfg.flag("train.conr", true);
    o.text_length = cfg.flag("train.text_length", false);
    o.synth = SynthParams::clean();
  } else {
    o.real_ratio = 0.0;
    o.use_conr = false;
  }
  o.synth.height = mc.height;
  reject_unread(cfg);

  fs::create_directories(out_dir);
  Model model(mc);
  if (!init_ckpt.empty()) model.load(init_ckpt);
  else if (is_weak) throw std::runtime_error("train: --init pretrain checkpoint is required");

  std::vector<PreparedSample> pool;
  if (is_weak) {
    if (data_dir.empty()) throw std::runtime_error("train: --data real_train directory required");
    pool = prepare_dataset(model, (fs::path(data_dir) / "manifest.jsonl").string());
  }

  const std::string ckpt = (fs::path(out_dir) / "checkpoint.bin").string();
  o.checkpoint_path = ckpt;
  std::ofstream log((fs::path(out_dir) / "loss_log.txt").string(), std::ios::binary);
  if (!log) throw std::runtime_error("cannot write loss log in " + out_dir);

  Config eff;
  put_model(eff, mc);
  put_stage(eff, sec, o);
  if (is_weak) {
    eff.set("train.real_ratio", o.real_ratio);
    eff.set("train.conr", o.use_conr);
    eff.set("train.text_length", o.text_length);
  }
  eff.save((fs::path(out_dir) / "effective_config.ini").string());

  PseudoBoxStore store;
  try {
    train_stage(model, o, pool, store, &log);
  } catch (const NumericError&) {
    // the periodic checkpoint (if any) is the last good state; keep it
    std::cerr << "aborting: last good checkpoint left in " << out_dir << "\n";
    throw;
  }
  model.save(ckpt);
  if (strip_ctx) model.save((fs::path(out_dir) / "checkpoint_stripped.bin").string(), false);
  if (is_weak) store.save((fs::path(out_dir) / "pseudo_boxes.bin").string());
  std::cout << sec << ": " << o.iters << " iterations -> " << ckpt << "\n";
  return kExitOk;
}

// ------------------------------------------------------------- eval / decode

nlohmann::json report_json(const EvalResult& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json j{{"id", row.id},
                     {"gt", row.gt},
                     {"pred", row.pred},
                     {"edit_distance", row.edit_distance}};
    if (row.seg_f1 >= 0) j["seg_f1"] = row.seg_f1;
    rows.push_back(std::move(j));
  }
  nlohmann::json out{{"AR", r.rec.ar},
                     {"CR", r.rec.cr},
                     {"NED", r.ned_score},
                     {"rows", std::move(rows)}};
  if (r.seg_f1 >= 0) {
    out["seg_f1"] = r.seg_f1;
    out["mean_iou"] = r.mean_iou;
  }
  return out;
}

int cmd_eval(const Config& cfg, const std::string& ckpt, const std::string& data_dir,
             const std::string& out_path, bool use_lm, const std::string& lm_path) {
  const ModelConfig mc = model_from(cfg);
  const DecodeParams dp = decode_from(cfg);
  reject_unread(cfg);
  Model model(mc);
  model.load(ckpt);
  const auto samples = prepare_dataset(model, (fs::path(data_dir) / "manifest.jsonl").string());
  NGramModel lm;
  if (use_lm) {
    if (lm_path.empty()) throw std::runtime_error("eval: --use_lm needs --lm");
    lm = load_lm(lm_path, mc.n_cls);
  }
  const EvalResult r = evaluate(model, samples, use_lm, use_lm ? &lm : nullptr, dp);

  char buf[512];
  std::snprintf(buf, sizeof buf,
                "samples  %6zu\nAR       %8.4f\nCR       %8.4f\nNED      %8.4f\n",
                r.rows.size(), r.rec.ar, r.rec.cr, r.ned_score);
  std::cout << buf;
  if (r.seg_f1 >= 0) {
    std::snprintf(buf, sizeof buf, "seg_f1   %8.4f\nmean_iou %8.4f\n", r.seg_f1, r.mean_iou);
    std::cout << buf;
  }
  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("eval: cannot write " + out_path);
    out << report_json(r).dump(2) << "\n";
  }
  return kExitOk;
}

int cmd_decode(const Config& cfg, const std::string& ckpt, const std::string& data_dir,
               const std::string& out_path, bool use_lm, const std::string& lm_path) {
  const ModelConfig mc = model_from(cfg);
  const DecodeParams dp = decode_from(cfg);
  reject_unread(cfg);
  Model model(mc);
  model.load(ckpt);
  const auto samples = prepare_dataset(model, (fs::path(data_dir) / "manifest.jsonl").string());
  NGramModel lm;
  if (use_lm) {
    if (lm_path.empty()) throw std::runtime_error("decode: --use_lm needs --lm");
    lm = load_lm(lm_path, mc.n_cls);
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("decode: cannot write " + out_path);
  for (const auto& ps : samples) {
    const PredictionGrid grid = model.forward(ps.input, false, ps.width_in);
    const Transcription tr = nms_transcribe(grid, dp);
    std::vector<int> rec = tr.rec;
    if (use_lm) rec = beam_search_lm(to_ctc_frames(grid), &lm, dp.beam_width, dp.lm_weight);
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : tr.seg)
      boxes.push_back({b.x_min, b.y_min, b.x_max, b.y_max, b.class_id, b.score});
    out << nlohmann::json{{"id", ps.id},
                          {"transcript", transcript_string(rec)},
                          {"boxes", std::move(boxes)}}
               .dump()
        << "\n";
  }
  std::cout << "decoded " << samples.size() << " lines -> " << out_path << "\n";
  return kExitOk;
}

// --------------------------------------------------------------------- viz

void write_ppm(const std::string& path, int h, int w, const std::vector<double>& rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("viz: cannot write " + path);
  out << "P6\n" << w << " " << h << "\n255\n";
  for (double v : rgb) {
    const int q = std::clamp(static_cast<int>(v * 255.0 + 0.5), 0, 255);
    out.put(static_cast<char>(q));
  }
}

int cmd_viz(const std::string& data_dir, const std::string& decoded_path,
            const std::string& out_dir) {
  const auto entries = load_manifest((fs::path(data_dir) / "manifest.jsonl").string());
  std::map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : entries) by_id[e.id] = &e;
  std::ifstream in(decoded_path);
  if (!in) throw std::runtime_error("viz: cannot open " + decoded_path);
  fs::create_directories(out_dir);
  std::string line;
  long count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    const std::string id = rec.at("id").get<std::string>();
    auto it = by_id.find(id);
    if (it == by_id.end()) throw std::runtime_error("viz: decoded id " + id + " not in manifest");
    const TextLineSample s = load_entry(*it->second);
    Raster base = s.raster;
    if (s.is_online) {
      double x0, y0, x1, y1;
      s.traj.bounds(x0, y0, x1, y1);
      base = Raster(static_cast<int>(y1) + 3, static_cast<int>(x1) + 3, 1.0);
      for (const auto& st : s.traj.strokes) draw_strokes(base, {st}, 0, 0, 1.0, 0.0);
    }
    std::vector<double> rgb(static_cast<size_t>(base.h) * base.w * 3);
    for (int y = 0; y < base.h; ++y)
      for (int x = 0; x < base.w; ++x)
        for (int c = 0; c < 3; ++c)
          rgb[(static_cast<size_t>(y) * base.w + x) * 3 + c] = base.at(y, x);
    auto mark = [&](int y, int x, double r, double g, double b) {
      if (y < 0 || y >= base.h || x < 0 || x >= base.w) return;
      double* px = &rgb[(static_cast<size_t>(y) * base.w + x) * 3];
      px[0] = r;
      px[1] = g;
      px[2] = b;
    };
    for (const auto& jb : rec.at("boxes")) {
      const int x0 = static_cast<int>(jb.at(0).get<double>());
      const int y0 = static_cast<int>(jb.at(1).get<double>());
      const int x1 = static_cast<int>(jb.at(2).get<double>());
      const int y1 = static_cast<int>(jb.at(3).get<double>());
      const int cls = jb.at(4).get<int>();
      for (int x = x0; x <= x1; ++x) {
        mark(y0, x, 0.85, 0.1, 0.1);
        mark(y1, x, 0.85, 0.1, 0.1);
      }
      for (int y = y0; y <= y1; ++y) {
        mark(y, x0, 0.85, 0.1, 0.1);
        mark(y, x1, 0.85, 0.1, 0.1);
      }
      // the predicted class, drawn as its glyph in green beside the top edge
      if (cls >= 0 && cls < kGlyphClasses) {
        const double side = 5.0;
        for (const auto& stroke : glyph_strokes(cls)) {
          const auto& p = stroke.pts;
          for (size_t k = 0; k + 1 < p.size(); ++k) {
            for (double t = 0.0; t <= 1.0; t += 0.05) {
              const double u = p[k][0] + t * (p[k + 1][0] - p[k][0]);
              const double v = p[k][1] + t * (p[k + 1][1] - p[k][1]);
              mark(y0 + 1 + static_cast<int>(v * side), x0 + 1 + static_cast<int>(u * side), 0.1,
                   0.6, 0.1);
            }
          }
        }
      }
    }
    write_ppm((fs::path(out_dir) / (id + ".ppm")).string(), base.h, base.w, rgb);
    ++count;
  }
  std::cout << "rendered " << count << " overlays -> " << out_dir << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"segmentation-based text line recognizer"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, ckpt, init_ckpt, lm_path, decoded_path;
  long seed_override = -1;
  bool use_lm = false, strip_ctx = false;

  CLI::App* synth = app.add_subcommand("synth", "generate datasets and a text corpus");
  synth->add_option("--config", config_path, "config file");
  synth->add_option("--out", out_path, "output directory")->required();
  synth->add_option("--seed", seed_override, "override synth.seed");

  CLI::App* pretrain = app.add_subcommand("pretrain", "stage 1: fully supervised on synthetic lines");
  pretrain->add_option("--config", config_path, "config file");
  pretrain->add_option("--out", out_path, "run directory")->required();
  pretrain->add_option("--init", init_ckpt, "optional checkpoint to start from");
  pretrain->add_option("--seed", seed_override, "override pretrain.seed");

  CLI::App* train = app.add_subcommand("train", "stage 2: weakly supervised on real + synthetic");
  train->add_option("--config", config_path, "config file");
  train->add_option("--out", out_path, "run directory")->required();
  train->add_option("--init", init_ckpt, "pretrain checkpoint")->required();
  train->add_option("--data", data_dir, "real_train dataset directory")->required();
  train->add_option("--seed", seed_override, "override train.seed");
  train->add_flag("--strip_ctx", strip_ctx, "also write a checkpoint without the recurrent branch");

  CLI::App* eval_cmd = app.add_subcommand("eval", "metrics on a dataset");
  eval_cmd->add_option("--config", config_path, "config file");
  eval_cmd->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  eval_cmd->add_option("--data", data_dir, "dataset directory")->required();
  eval_cmd->add_option("--out", out_path, "report JSON path");
  eval_cmd->add_flag("--use_lm", use_lm, "replace NMS transcripts with LM-fused beam search");
  eval_cmd->add_option("--lm", lm_path, "language model (.txt corpus or saved binary)");

  CLI::App* decode = app.add_subcommand("decode", "write transcripts + boxes as JSON lines");
  decode->add_option("--config", config_path, "config file");
  decode->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  decode->add_option("--data", data_dir, "dataset directory")->required();
  decode->add_option("--out", out_path, "output JSONL path")->required();
  decode->add_flag("--use_lm", use_lm, "LM-fused beam search transcripts");
  decode->add_option("--lm", lm_path, "language model (.txt corpus or saved binary)");

  CLI::App* viz = app.add_subcommand("viz", "overlay decoded boxes onto the inputs");
  viz->add_option("--data", data_dir, "dataset directory")->required();
  viz->add_option("--decoded", decoded_path, "decode output JSONL")->required();
  viz->add_option("--out", out_path, "output directory for PPM overlays")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    const Config cfg = config_path.empty() ? Config{} : Config::from_file(config_path);
    if (synth->parsed()) return cmd_synth(cfg, out_path, seed_override);
    if (pretrain->parsed())
      return run_stage(cfg, "pretrain", out_path, init_ckpt, "", seed_override, strip_ctx);
    if (train->parsed())
      return run_stage(cfg, "train", out_path, init_ckpt, data_dir, seed_override, strip_ctx);
    if (eval_cmd->parsed()) return cmd_eval(cfg, ckpt, data_dir, out_path, use_lm, lm_path);
    if (decode->parsed()) return cmd_decode(cfg, ckpt, data_dir, out_path, use_lm, lm_path);
    if (viz->parsed()) return cmd_viz(data_dir, decoded_path, out_path);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
