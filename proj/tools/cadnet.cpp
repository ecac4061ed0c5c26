// cadnet — command line front end for the CAD-Net pipeline.
//
// Subcommands:
//   synth    generate a toy multi-low-resolution dataset directory
//   train    train a model from a config file, write checkpoint + telemetry
//   eval     evaluate a checkpoint on a dataset (CMC / SSIM / PSNR)
//   recover  run the HR recovery path on a single PNG
//   export   dump w/u embeddings for a dataset to CSV
//   ablate   train and compare the standard ablation variants

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cadnet/config.hpp"
#include "cadnet/dataset.hpp"
#include "cadnet/eval.hpp"
#include "cadnet/image.hpp"
#include "cadnet/png_io.hpp"
#include "cadnet/trainer.hpp"

namespace fs = std::filesystem;

namespace {

void require_empty_or_force(const std::string& dir, bool force) {
  if (fs::exists(dir) && fs::is_directory(dir) && !fs::is_empty(dir) && !force)
    throw std::runtime_error("output directory '" + dir +
                             "' is not empty (use --force to overwrite)");
}

std::pair<int, int> parse_size(const std::string& s) {
  auto x = s.find('x');
  if (x == std::string::npos)
    throw std::runtime_error("--size must look like HxW, got '" + s + "'");
  try {
    size_t a = 0, b = 0;
    int h = std::stoi(s.substr(0, x), &a);
    int w = std::stoi(s.substr(x + 1), &b);
    if (a != x || b != s.size() - x - 1) throw std::invalid_argument(s);
    return {h, w};
  } catch (const std::exception&) {
    throw std::runtime_error("--size must look like HxW, got '" + s + "'");
  }
}

int cmd_synth(int ids, int per_id, const std::string& size, uint64_t seed,
              const std::string& out, bool force) {
  auto [h, w] = parse_size(size);
  require_empty_or_force(out, force);
  cadnet::MlrDataset ds = cadnet::make_toy_dataset(ids, per_id, h, w, seed);
  cadnet::save_dataset(ds, out);
  std::cout << "wrote " << out << ": " << ds.num_identities << " identities, "
            << ds.train.size() << " train / " << ds.queries.size()
            << " query / " << ds.gallery.size() << " gallery images ("
            << h << "x" << w << ", seed " << seed << ")\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out,
              bool force) {
  cadnet::RunConfig rc = cadnet::RunConfig::from_file(config_path);
  require_empty_or_force(out, force);
  fs::create_directories(out);

  cadnet::MlrDataset ds = cadnet::load_dataset(rc.data_dir);
  cadnet::Trainer trainer(ds, rc.train);
  std::vector<cadnet::EpochTelemetry> telemetry = trainer.train();

  std::string telemetry_path = (fs::path(out) / "telemetry.csv").string();
  std::string ckpt_path = (fs::path(out) / "checkpoint.cadnet").string();
  cadnet::write_telemetry_csv(telemetry, telemetry_path);
  trainer.save_checkpoint(ckpt_path);

  double final_total =
      telemetry.empty() ? 0.0 : telemetry.back().mean.total;
  std::cout << "trained " << rc.train.epochs << " epochs on "
            << ds.num_identities << " identities; final total loss "
            << final_total << "\n"
            << "checkpoint: " << ckpt_path << "\n"
            << "telemetry:  " << telemetry_path << "\n";
  return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data,
             const std::vector<int>& rates, int trials, uint64_t seed,
             const std::string& out) {
  cadnet::MlrDataset ds = cadnet::load_dataset(data);
  cadnet::Trainer trainer = cadnet::Trainer::load_checkpoint(ckpt, ds);
  cadnet::EvalReport report = cadnet::evaluate(
      trainer.net().crgan, trainer.net().reid, ds, rates, trials, seed);

  fs::create_directories(out);
  std::string json_path = (fs::path(out) / "eval.json").string();
  std::string csv_path = (fs::path(out) / "eval.csv").string();
  cadnet::write_eval_json(report, json_path);
  cadnet::write_eval_csv(report, csv_path);

  std::cout << cadnet::eval_report_json(report).dump(2) << "\n"
            << "report: " << json_path << ", " << csv_path << "\n";
  return 0;
}

int cmd_recover(const std::string& ckpt, const std::string& in,
                const std::string& out) {
  auto [cfg, net] = cadnet::CheckpointCodec::load_net(ckpt);
  cadnet::Image img;
  img.px = cadnet::read_png_rgb8(in, img.h, img.w);
  if (img.h != cfg.model.height || img.w != cfg.model.width)
    throw std::runtime_error(
        "input image is " + std::to_string(img.h) + "x" +
        std::to_string(img.w) + " but the checkpointed model expects " +
        std::to_string(cfg.model.height) + "x" +
        std::to_string(cfg.model.width));
  cadnet::Tensor rec = net.crgan.recover(cadnet::image_to_tensor(img));
  cadnet::Image rec_img = cadnet::tensor_to_image(rec, 0);
  cadnet::write_png_rgb8(out, rec_img.px, rec_img.h, rec_img.w);
  std::cout << "recovered " << in << " -> " << out << " (" << rec_img.h << "x"
            << rec_img.w << ")\n";
  return 0;
}

int cmd_export(const std::string& ckpt, const std::string& data,
               const std::string& out) {
  cadnet::MlrDataset ds = cadnet::load_dataset(data);
  cadnet::Trainer trainer = cadnet::Trainer::load_checkpoint(ckpt, ds);
  cadnet::export_embeddings(trainer.net().crgan, trainer.net().reid, ds, out);
  std::cout << "exported embeddings for "
            << ds.train.size() + ds.queries.size() + ds.gallery.size()
            << " images to " << out << "\n";
  return 0;
}

struct AblationRow {
  std::string name;
  double ssim = 0, psnr = 0, rank1 = 0;
};

int cmd_ablate(const std::string& config_path, const std::string& out,
               bool force) {
  cadnet::RunConfig rc = cadnet::RunConfig::from_file(config_path);
  require_empty_or_force(out, force);
  fs::create_directories(out);
  cadnet::MlrDataset ds = cadnet::load_dataset(rc.data_dir);

  struct Variant {
    std::string name;
    void (*apply)(cadnet::TrainConfig&);
  };
  const std::vector<Variant> variants = {
      {"full", [](cadnet::TrainConfig&) {}},
      {"w/o L_adv_DI", [](cadnet::TrainConfig& c) { c.no_adv_di = true; }},
      {"w/o L_adv_DF", [](cadnet::TrainConfig& c) { c.no_adv_df = true; }},
      {"w/o L_rec", [](cadnet::TrainConfig& c) { c.no_rec = true; }},
      {"w/o L_cls", [](cadnet::TrainConfig& c) { c.no_cls = true; }},
      {"f only",
       [](cadnet::TrainConfig& c) { c.variant = cadnet::JointVariant::FOnly; }},
      {"g only",
       [](cadnet::TrainConfig& c) { c.variant = cadnet::JointVariant::GOnly; }},
  };

  std::vector<AblationRow> rows;
  for (const Variant& v : variants) {
    cadnet::TrainConfig cfg = rc.train;  // shared seed across all variants
    v.apply(cfg);
    cadnet::Trainer trainer(ds, cfg);
    trainer.train();
    cadnet::EvalReport rep =
        cadnet::evaluate(trainer.net().crgan, trainer.net().reid, ds,
                         cfg.rates, rc.eval_trials, cfg.seed);
    rows.push_back({v.name, rep.ssim_mean, rep.psnr_mean, rep.rank1});
    std::cerr << "[" << v.name << "] rank1=" << rep.rank1
              << " ssim=" << rep.ssim_mean << " psnr=" << rep.psnr_mean
              << "\n";
  }

  std::string table_path = (fs::path(out) / "ablation.csv").string();
  std::ofstream csv(table_path);
  if (!csv) throw std::runtime_error("cannot write " + table_path);
  csv << "variant,ssim,psnr,rank1\n";
  char buf[128];
  std::printf("%-14s %8s %8s %8s\n", "variant", "SSIM", "PSNR", "Rank-1");
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.4f,%.2f,%.4f", r.ssim, r.psnr, r.rank1);
    csv << r.name << "," << buf << "\n";
    std::printf("%-14s %8.4f %8.2f %8.4f\n", r.name.c_str(), r.ssim, r.psnr,
                r.rank1);
  }
  std::cout << "table: " << table_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAD-Net: cross-resolution person re-identification"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a toy dataset");
  int ids = 0, per_id = 0;
  std::string size = "32x16", out_dir;
  uint64_t seed = 1;
  bool force = false;
  synth->add_option("--ids", ids, "number of identities")->required();
  synth->add_option("--per-id", per_id, "images per identity")->required();
  synth->add_option("--size", size, "canonical HxW (default 32x16)");
  synth->add_option("--seed", seed, "root seed");
  synth->add_option("--out", out_dir, "output directory")->required();
  synth->add_flag("--force", force, "allow writing into a non-empty directory");

  // train
  auto* train = app.add_subcommand("train", "train a model from a config");
  std::string config_path;
  train->add_option("--config", config_path, "config file")->required();
  train->add_option("--out", out_dir, "output directory")->required();
  train->add_flag("--force", force, "allow writing into a non-empty directory");

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ckpt_path, data_dir;
  std::vector<int> rates = {2, 3, 4, 8};
  int trials = 10;
  eval->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  eval->add_option("--data", data_dir, "dataset directory")->required();
  eval->add_option("--rates", rates, "down-sampling rates")->delimiter(',');
  eval->add_option("--trials", trials, "single-shot gallery trials");
  eval->add_option("--seed", seed, "gallery-draw seed");
  eval->add_option("--out", out_dir, "output directory (default .)");

  // recover
  auto* recover = app.add_subcommand("recover", "recover HR from one PNG");
  std::string in_path, out_path;
  recover->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  recover->add_option("--in", in_path, "input PNG")->required();
  recover->add_option("--out", out_path, "output PNG")->required();

  // export
  auto* exp = app.add_subcommand("export", "export embeddings to CSV");
  exp->add_option("--ckpt", ckpt_path, "checkpoint file")->required();
  exp->add_option("--data", data_dir, "dataset directory")->required();
  exp->add_option("--out", out_path, "output CSV")->required();

  // ablate
  auto* ablate = app.add_subcommand("ablate", "run the ablation suite");
  ablate->add_option("--config", config_path, "config file")->required();
  ablate->add_option("--out", out_dir, "output directory")->required();
  ablate->add_flag("--force", force,
                   "allow writing into a non-empty directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return cmd_synth(ids, per_id, size, seed, out_dir, force);
    if (train->parsed()) return cmd_train(config_path, out_dir, force);
    if (eval->parsed()) {
      if (out_dir.empty()) out_dir = ".";
      return cmd_eval(ckpt_path, data_dir, rates, trials, seed, out_dir);
    }
    if (recover->parsed()) return cmd_recover(ckpt_path, in_path, out_path);
    if (exp->parsed()) return cmd_export(ckpt_path, data_dir, out_path);
    if (ablate->parsed()) return cmd_ablate(config_path, out_dir, force);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
