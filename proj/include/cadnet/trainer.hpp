#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cadnet/dataset.hpp"
#include "cadnet/reid.hpp"

namespace cadnet {

struct TrainConfig {
  // loss weights
  float lambda_adv_df = 1.0f;
  float lambda_rec = 1.0f;
  float lambda_adv_di = 1.0f;
  float margin = 2.0f;

  // optimizer settings; discriminators share momentum/weight decay
  float lr_main = 1e-3f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  float lr_disc = 1e-4f;

  // PK batch structure
  int p = 8;
  int k = 2;
  int epochs = 150;
  uint64_t seed = 1;
  std::vector<int> rates = {2, 3, 4};

  // ablation switches
  bool no_adv_df = false;
  bool no_adv_di = false;
  bool no_rec = false;
  bool no_cls = false;
  JointVariant variant = JointVariant::Full;

  ModelConfig model;

  int batch() const { return p * k; }
  float eff_lambda_adv_df() const { return no_adv_df ? 0.0f : lambda_adv_df; }
  float eff_lambda_adv_di() const { return no_adv_di ? 0.0f : lambda_adv_di; }
  float eff_lambda_rec() const { return no_rec ? 0.0f : lambda_rec; }

  void validate() const {
    if (lambda_adv_df < 0 || lambda_rec < 0 || lambda_adv_di < 0)
      throw std::invalid_argument("TrainConfig: loss weights must be >= 0");
    if (p < 2 || k < 2)
      throw std::invalid_argument("TrainConfig: need P >= 2 and K >= 2");
  }
};

struct StepReport {
  float l_id = 0, l_tri = 0, l_rec = 0;
  float l_advf_d = 0, l_advf_g = 0, l_advi_d = 0, l_advi_g = 0;
  float total = 0;
};

struct EpochTelemetry {
  int epoch = 0;
  StepReport mean;
};

inline void write_telemetry_csv(const std::vector<EpochTelemetry>& rows,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write telemetry CSV: " + path);
  out << "epoch,L_id,L_tri,L_rec,L_advF_d,L_advF_g,L_advI_d,L_advI_g,total\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%d,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g\n",
                  r.epoch, r.mean.l_id, r.mean.l_tri, r.mean.l_rec,
                  r.mean.l_advf_d, r.mean.l_advf_g, r.mean.l_advi_d,
                  r.mean.l_advi_g, r.mean.total);
    out << buf;
  }
}

// The five components E, G, D_F, D_I, F plus classifier C, with parameter
// groups arranged for the alternating update schedule.
struct CadNet {
  ModelConfig model;
  int num_classes;
  Crgan crgan;
  ReidNet reid;
  ParamGroup main_params;    // E, G, F, C
  ParamGroup disc_f_params;  // D_F
  ParamGroup disc_i_params;  // D_I

  CadNet(const ModelConfig& cfg, int num_classes, JointVariant variant,
         Rng init_rng)
      : model(cfg),
        num_classes(num_classes),
        crgan(cfg, init_rng),
        reid(cfg, num_classes, init_rng, variant) {
    // component names are already baked into the parameter names
    main_params.append(crgan.encoder.params());
    main_params.append(crgan.decoder.params());
    main_params.append(reid.hr_encoder.params());
    main_params.append(reid.classifier.params());
    disc_f_params.append(crgan.disc_f.params());
    disc_i_params.append(crgan.disc_i.params());
  }
};

struct TrainError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Trainer {
 public:
  Trainer(const MlrDataset& dataset, const TrainConfig& cfg)
      : cfg_(cfg),
        root_rng_(cfg.seed),
        net_(cfg.model, dataset.num_identities, cfg.variant,
             root_rng_.split(1)),
        sampler_(dataset, cfg.p, cfg.k, root_rng_.split(2), cfg.rates),
        main_opt_(net_.main_params,
                  {cfg.lr_main, cfg.momentum, cfg.weight_decay}),
        disc_f_opt_(net_.disc_f_params,
                    {cfg.lr_disc, cfg.momentum, cfg.weight_decay}),
        disc_i_opt_(net_.disc_i_params,
                    {cfg.lr_disc, cfg.momentum, cfg.weight_decay}),
        dataset_(&dataset) {
    cfg_.validate();
    // classifier classes are contiguous; map raw identities in batch order
    std::set<int> ids;
    for (const auto& im : dataset.train) ids.insert(im.identity);
    int next = 0;
    for (int id : ids) class_of_[id] = next++;
  }

  const TrainConfig& config() const { return cfg_; }
  CadNet& net() { return net_; }
  const CadNet& net() const { return net_; }
  int epochs_done() const { return epochs_done_; }
  BatchSampler& sampler() { return sampler_; }

  // One full alternating step: (1) D_F on detached features, (2) D_I on
  // detached recovered images, (3) E/G/F/C on the weighted total objective.
  StepReport train_step(const TrainBatch& batch) {
    const bool use_advf = cfg_.eff_lambda_adv_df() > 0.0f;
    const bool use_advi = cfg_.eff_lambda_adv_di() > 0.0f;
    const bool use_rec = cfg_.eff_lambda_rec() > 0.0f;
    const bool use_cls = !cfg_.no_cls;
    StepReport report;

    Tensor x_hr = images_to_tensor(batch.hr);
    std::vector<const Image*> lr_ptrs, truth_ptrs;
    for (const auto& im : batch.lr) lr_ptrs.push_back(&im);
    for (const auto& im : batch.lr_truth) truth_ptrs.push_back(&im);
    Tensor x_lr = images_to_tensor(lr_ptrs);
    Tensor lr_truth = images_to_tensor(truth_ptrs);

    // taped generator-side forward, shared by all three sub-steps
    auto enc_h = net_.crgan.encoder.forward(x_hr);
    auto enc_l = net_.crgan.encoder.forward(x_lr);
    Tensor rec_h, rec_l;
    if (use_advi || use_rec || use_cls) {
      rec_h = net_.crgan.decoder.forward(enc_h.f, enc_h.stages,
                                         cfg_.model.height, cfg_.model.width);
      rec_l = net_.crgan.decoder.forward(enc_l.f, enc_l.stages,
                                         cfg_.model.height, cfg_.model.width);
    }

    // (1) feature discriminator on detached features
    if (use_advf) {
      disc_f_opt_.zero_grads();
      AdvLoss adv = loss_adv_feature(net_.crgan.disc_f, detach(enc_h.f),
                                     detach(enc_l.f), cfg_.model.disc_eps);
      report.l_advf_d = checked(adv.d_loss, "L_advF_d");
      backward(adv.d_loss);
      disc_f_opt_.step();
    }

    // (2) image discriminator on detached recovered images
    if (use_advi) {
      disc_i_opt_.zero_grads();
      AdvLoss adv = loss_adv_image(net_.crgan.disc_i, x_hr, detach(rec_l),
                                   detach(rec_h), cfg_.model.disc_eps,
                                   cfg_.model.image_adv_real_weight);
      report.l_advi_d = checked(adv.d_loss, "L_advI_d");
      backward(adv.d_loss);
      disc_i_opt_.step();
    }

    // (3) main update over E, G, F, C against the updated discriminators
    std::vector<Tensor> terms;
    if (use_cls) {
      Tensor u_h = pooled_embedding(enc_h.f, rec_h);
      Tensor u_l = pooled_embedding(enc_l.f, rec_l);
      std::vector<int> y_h = mapped_labels(batch.hr_labels);
      std::vector<int> y_l = mapped_labels(batch.lr_labels);
      Tensor id_loss = scale(add(loss_id(net_.reid.classifier.forward(u_h), y_h),
                                 loss_id(net_.reid.classifier.forward(u_l), y_l)),
                             0.5f);
      Tensor tri_loss = loss_triplet(u_h, y_h, u_l, y_l, cfg_.margin);
      report.l_id = checked(id_loss, "L_id");
      report.l_tri = checked(tri_loss, "L_tri");
      terms.push_back(loss_cls(id_loss, tri_loss));
    }
    // discriminators stay frozen through the whole main backward pass
    if (use_advf) {
      net_.disc_f_params.set_requires_grad(false);
      AdvLoss adv = loss_adv_feature(net_.crgan.disc_f, enc_h.f, enc_l.f,
                                     cfg_.model.disc_eps);
      report.l_advf_g = checked(adv.g_loss, "L_advF_g");
      terms.push_back(scale(adv.g_loss, cfg_.eff_lambda_adv_df()));
    }
    if (use_rec) {
      Tensor rec = loss_rec(rec_h, x_hr, rec_l, lr_truth);
      report.l_rec = checked(rec, "L_rec");
      terms.push_back(scale(rec, cfg_.eff_lambda_rec()));
    }
    if (use_advi) {
      net_.disc_i_params.set_requires_grad(false);
      AdvLoss adv = loss_adv_image(net_.crgan.disc_i, x_hr, rec_l, rec_h,
                                   cfg_.model.disc_eps,
                                   cfg_.model.image_adv_real_weight);
      report.l_advi_g = checked(adv.g_loss, "L_advI_g");
      terms.push_back(scale(adv.g_loss, cfg_.eff_lambda_adv_di()));
    }

    if (!terms.empty()) {
      Tensor total = terms[0];
      for (size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
      report.total = checked(total, "total");
      main_opt_.zero_grads();
      backward(total);
      main_opt_.step();
    }
    if (use_advf) net_.disc_f_params.set_requires_grad(true);
    if (use_advi) net_.disc_i_params.set_requires_grad(true);
    return report;
  }

  // forward-only loss evaluation (no updates); used to cross-check telemetry
  StepReport compute_losses(const TrainBatch& batch) const {
    return const_cast<Trainer*>(this)->compute_losses_impl(batch);
  }

  // Runs epochs [epochs_done, until_epoch); until_epoch < 0 means the
  // configured total. Returns one telemetry row per epoch actually run.
  std::vector<EpochTelemetry> train(int until_epoch = -1) {
    if (until_epoch < 0) until_epoch = cfg_.epochs;
    until_epoch = std::min(until_epoch, cfg_.epochs);
    std::vector<EpochTelemetry> telemetry;
    int steps = std::max<int>(
        1, static_cast<int>(dataset_->train.size()) / cfg_.batch());
    for (int epoch = epochs_done_; epoch < until_epoch; ++epoch) {
      StepReport sum;
      for (int s = 0; s < steps; ++s) {
        StepReport r = train_step(sampler_.next(cfg_.batch()));
        sum.l_id += r.l_id; sum.l_tri += r.l_tri; sum.l_rec += r.l_rec;
        sum.l_advf_d += r.l_advf_d; sum.l_advf_g += r.l_advf_g;
        sum.l_advi_d += r.l_advi_d; sum.l_advi_g += r.l_advi_g;
        sum.total += r.total;
      }
      float inv = 1.0f / static_cast<float>(steps);
      EpochTelemetry row;
      row.epoch = epoch;
      row.mean = {sum.l_id * inv, sum.l_tri * inv, sum.l_rec * inv,
                  sum.l_advf_d * inv, sum.l_advf_g * inv, sum.l_advi_d * inv,
                  sum.l_advi_g * inv, sum.total * inv};
      telemetry.push_back(row);
      epochs_done_ = epoch + 1;
    }
    return telemetry;
  }

  void save_checkpoint(const std::string& path) const;
  static Trainer load_checkpoint(const std::string& path,
                                 const MlrDataset& dataset);
  static TrainConfig peek_config(const std::string& path);

 private:
  StepReport compute_losses_impl(const TrainBatch& batch) {
    // same forward math as train_step, without any parameter updates
    StepReport report;
    Tensor x_hr = images_to_tensor(batch.hr);
    std::vector<const Image*> lr_ptrs, truth_ptrs;
    for (const auto& im : batch.lr) lr_ptrs.push_back(&im);
    for (const auto& im : batch.lr_truth) truth_ptrs.push_back(&im);
    Tensor x_lr = images_to_tensor(lr_ptrs);
    Tensor lr_truth = images_to_tensor(truth_ptrs);
    auto enc_h = net_.crgan.encoder.forward(x_hr);
    auto enc_l = net_.crgan.encoder.forward(x_lr);
    Tensor rec_h = net_.crgan.decoder.forward(enc_h.f, enc_h.stages,
                                              cfg_.model.height, cfg_.model.width);
    Tensor rec_l = net_.crgan.decoder.forward(enc_l.f, enc_l.stages,
                                              cfg_.model.height, cfg_.model.width);
    if (!cfg_.no_cls) {
      Tensor u_h = pooled_embedding(enc_h.f, rec_h);
      Tensor u_l = pooled_embedding(enc_l.f, rec_l);
      std::vector<int> y_h = mapped_labels(batch.hr_labels);
      std::vector<int> y_l = mapped_labels(batch.lr_labels);
      report.l_id =
          0.5f * (loss_id(net_.reid.classifier.forward(u_h), y_h).item() +
                  loss_id(net_.reid.classifier.forward(u_l), y_l).item());
      report.l_tri = loss_triplet(u_h, y_h, u_l, y_l, cfg_.margin).item();
    }
    if (cfg_.eff_lambda_adv_df() > 0) {
      AdvLoss adv = loss_adv_feature(net_.crgan.disc_f, enc_h.f, enc_l.f,
                                     cfg_.model.disc_eps);
      report.l_advf_d = adv.d_loss.item();
      report.l_advf_g = adv.g_loss.item();
    }
    report.l_rec = loss_rec(rec_h, x_hr, rec_l, lr_truth).item();
    if (cfg_.eff_lambda_adv_di() > 0) {
      AdvLoss adv = loss_adv_image(net_.crgan.disc_i, x_hr, rec_l, rec_h,
                                   cfg_.model.disc_eps,
                                   cfg_.model.image_adv_real_weight);
      report.l_advi_d = adv.d_loss.item();
      report.l_advi_g = adv.g_loss.item();
    }
    return report;
  }

  Tensor pooled_embedding(const Tensor& f, const Tensor& recovered) {
    switch (cfg_.variant) {
      case JointVariant::FOnly:
        return global_avg_pool(f);
      case JointVariant::GOnly:
        return global_avg_pool(net_.reid.hr_encoder.forward(recovered).f);
      default: {
        Tensor g = net_.reid.hr_encoder.forward(recovered).f;
        return global_avg_pool(concat(f, g));
      }
    }
  }

  std::vector<int> mapped_labels(const std::vector<int>& raw) const {
    std::vector<int> out(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) out[i] = class_of_.at(raw[i]);
    return out;
  }

  float checked(const Tensor& loss, const char* name) const {
    float v = loss.item();
    if (!std::isfinite(v))
      throw TrainError(std::string("non-finite loss term: ") + name);
    return v;
  }

  friend struct CheckpointCodec;

  TrainConfig cfg_;
  Rng root_rng_;
  CadNet net_;
  BatchSampler sampler_;
  SgdOptimizer main_opt_, disc_f_opt_, disc_i_opt_;
  const MlrDataset* dataset_;
  std::map<int, int> class_of_;
  int epochs_done_ = 0;
};

// ---------------------------------------------------------------------------
// checkpoint: "CADN" magic, u64 LE manifest length, UTF-8 JSON manifest,
// then a concatenated little-endian f32 blob (parameters + momentum buffers)
// ---------------------------------------------------------------------------

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckpointCodec {
  static nlohmann::json config_json(const TrainConfig& c, int num_classes) {
    return {
        {"lambda_adv_df", c.lambda_adv_df}, {"lambda_rec", c.lambda_rec},
        {"lambda_adv_di", c.lambda_adv_di}, {"margin", c.margin},
        {"lr_main", c.lr_main},             {"momentum", c.momentum},
        {"weight_decay", c.weight_decay},   {"lr_disc", c.lr_disc},
        {"p", c.p},                         {"k", c.k},
        {"epochs", c.epochs},               {"seed", c.seed},
        {"rates", c.rates},                 {"no_adv_df", c.no_adv_df},
        {"no_adv_di", c.no_adv_di},         {"no_rec", c.no_rec},
        {"no_cls", c.no_cls},               {"variant", to_string(c.variant)},
        {"height", c.model.height},         {"width", c.model.width},
        {"channels", c.model.channels},
        {"image_adv_real_weight", c.model.image_adv_real_weight},
        {"num_classes", num_classes},
    };
  }

  static TrainConfig config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    c.lambda_adv_df = j.at("lambda_adv_df");
    c.lambda_rec = j.at("lambda_rec");
    c.lambda_adv_di = j.at("lambda_adv_di");
    c.margin = j.at("margin");
    c.lr_main = j.at("lr_main");
    c.momentum = j.at("momentum");
    c.weight_decay = j.at("weight_decay");
    c.lr_disc = j.at("lr_disc");
    c.p = j.at("p");
    c.k = j.at("k");
    c.epochs = j.at("epochs");
    c.seed = j.at("seed");
    c.rates = j.at("rates").get<std::vector<int>>();
    c.no_adv_df = j.at("no_adv_df");
    c.no_adv_di = j.at("no_adv_di");
    c.no_rec = j.at("no_rec");
    c.no_cls = j.at("no_cls");
    c.variant = joint_variant_from_string(j.at("variant"));
    c.model.height = j.at("height");
    c.model.width = j.at("width");
    c.model.channels = j.at("channels").get<std::vector<int>>();
    c.model.image_adv_real_weight = j.at("image_adv_real_weight");
    return c;
  }

  static void save(const Trainer& ct, const std::string& path) {
    Trainer& t = const_cast<Trainer&>(ct);  // read-only access below
    nlohmann::json manifest;
    manifest["magic"] = "cadnet-checkpoint";
    manifest["endianness"] = "little";
    manifest["float_width"] = 32;
    manifest["epoch"] = t.epochs_done_;
    manifest["config"] = config_json(t.cfg_, t.net_.num_classes);
    manifest["sampler_rng_state"] = t.sampler_.rng().state();
    manifest["root_rng_state"] = t.root_rng_.state();

    std::vector<float> blob;
    nlohmann::json params = nlohmann::json::array();
    auto emit = [&](const std::string& name, const Shape& shape,
                    const std::vector<float>& data) {
      params.push_back({{"name", name},
                        {"shape", shape},
                        {"offset", blob.size() * sizeof(float)}});
      blob.insert(blob.end(), data.begin(), data.end());
    };
    auto emit_group = [&](const ParamGroup& g, SgdOptimizer& opt) {
      for (const auto& p : g.items())
        emit(p.name, p.tensor.shape(), p.tensor.data());
      for (const auto& p : g.items()) {
        const auto& buf = opt.buffers().at(p.name);
        emit("momentum." + p.name,
             {static_cast<int>(buf.size())}, buf);
      }
    };
    emit_group(t.net_.main_params, t.main_opt_);
    emit_group(t.net_.disc_f_params, t.disc_f_opt_);
    emit_group(t.net_.disc_i_params, t.disc_i_opt_);
    manifest["params"] = params;
    manifest["blob_bytes"] = blob.size() * sizeof(float);

    std::string header = manifest.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write checkpoint: " + path);
    out.write("CADN", 4);
    uint64_t len = header.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(header.data(), static_cast<std::streamsize>(header.size()));
    out.write(reinterpret_cast<const char*>(blob.data()),
              static_cast<std::streamsize>(blob.size() * sizeof(float)));
  }

  struct Loaded {
    nlohmann::json manifest;
    std::vector<float> blob;
  };

  static Loaded read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);
    char magic[4];
    uint64_t len = 0;
    if (!in.read(magic, 4) || std::memcmp(magic, "CADN", 4) != 0)
      throw CheckpointError("not a cadnet checkpoint: " + path);
    if (!in.read(reinterpret_cast<char*>(&len), sizeof len))
      throw CheckpointError("truncated checkpoint header: " + path);
    std::string header(len, '\0');
    if (!in.read(header.data(), static_cast<std::streamsize>(len)))
      throw CheckpointError("truncated checkpoint manifest: " + path);
    Loaded out;
    out.manifest = nlohmann::json::parse(header);
    if (out.manifest.value("endianness", "") != "little")
      throw CheckpointError("checkpoint endianness marker absent or invalid");
    if (out.manifest.value("float_width", 0) != 32)
      throw CheckpointError("unsupported checkpoint float width");
    size_t blob_bytes = out.manifest.at("blob_bytes");
    if (blob_bytes == 0)
      throw CheckpointError("checkpoint has an empty parameter blob");
    out.blob.resize(blob_bytes / sizeof(float));
    if (!in.read(reinterpret_cast<char*>(out.blob.data()),
                 static_cast<std::streamsize>(blob_bytes)))
      throw CheckpointError("truncated checkpoint blob: " + path);
    return out;
  }

  static void restore(Trainer& t, const Loaded& loaded) {
    std::map<std::string, std::pair<Shape, const float*>> by_name;
    for (const auto& pj : loaded.manifest.at("params")) {
      size_t offset = pj.at("offset").get<size_t>() / sizeof(float);
      by_name[pj.at("name")] = {pj.at("shape").get<Shape>(),
                                loaded.blob.data() + offset};
    }
    auto restore_group = [&](ParamGroup& g, SgdOptimizer& opt) {
      for (auto& p : g.items()) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
          throw CheckpointError("checkpoint missing parameter: " + p.name);
        if (it->second.first != p.tensor.shape())
          throw CheckpointError(
              "checkpoint/architecture shape mismatch at parameter '" + p.name +
              "': " + shape_str(it->second.first) + " vs " +
              shape_str(p.tensor.shape()));
        std::copy_n(it->second.second, p.tensor.size(),
                    p.tensor.data().begin());
        auto mit = by_name.find("momentum." + p.name);
        if (mit == by_name.end())
          throw CheckpointError("checkpoint missing momentum buffer for " +
                                p.name);
        auto& buf = opt.buffers().at(p.name);
        std::copy_n(mit->second.second, buf.size(), buf.begin());
      }
    };
    restore_group(t.net_.main_params, t.main_opt_);
    restore_group(t.net_.disc_f_params, t.disc_f_opt_);
    restore_group(t.net_.disc_i_params, t.disc_i_opt_);
    t.epochs_done_ = loaded.manifest.at("epoch");
    t.sampler_.rng().set_state(loaded.manifest.at("sampler_rng_state"));
    t.root_rng_.set_state(loaded.manifest.at("root_rng_state"));
  }

  // Rebuild just the network (no sampler/optimizer state); enough for
  // inference-only commands that have no dataset at hand.
  static std::pair<TrainConfig, CadNet> load_net(const std::string& path) {
    Loaded loaded = read(path);
    TrainConfig cfg = config_from_json(loaded.manifest.at("config"));
    int num_classes = loaded.manifest.at("config").at("num_classes");
    Rng init_rng = Rng(cfg.seed).split(1);
    CadNet net(cfg.model, num_classes, cfg.variant, init_rng);

    std::map<std::string, std::pair<Shape, const float*>> by_name;
    for (const auto& pj : loaded.manifest.at("params")) {
      size_t offset = pj.at("offset").get<size_t>() / sizeof(float);
      by_name[pj.at("name")] = {pj.at("shape").get<Shape>(),
                                loaded.blob.data() + offset};
    }
    auto fill = [&](ParamGroup& g) {
      for (auto& p : g.items()) {
        auto it = by_name.find(p.name);
        if (it == by_name.end())
          throw CheckpointError("checkpoint missing parameter: " + p.name);
        if (it->second.first != p.tensor.shape())
          throw CheckpointError(
              "checkpoint/architecture shape mismatch at parameter '" + p.name +
              "': " + shape_str(it->second.first) + " vs " +
              shape_str(p.tensor.shape()));
        std::copy_n(it->second.second, p.tensor.size(),
                    p.tensor.data().begin());
      }
    };
    fill(net.main_params);
    fill(net.disc_f_params);
    fill(net.disc_i_params);
    return {cfg, std::move(net)};
  }
};

inline void Trainer::save_checkpoint(const std::string& path) const {
  CheckpointCodec::save(*this, path);
}

inline Trainer Trainer::load_checkpoint(const std::string& path,
                                        const MlrDataset& dataset) {
  auto loaded = CheckpointCodec::read(path);
  TrainConfig cfg = CheckpointCodec::config_from_json(loaded.manifest.at("config"));
  int num_classes = loaded.manifest.at("config").at("num_classes");
  if (num_classes != dataset.num_identities)
    throw CheckpointError("checkpoint expects " + std::to_string(num_classes) +
                          " identities, dataset has " +
                          std::to_string(dataset.num_identities));
  Trainer t(dataset, cfg);
  CheckpointCodec::restore(t, loaded);
  return t;
}

inline TrainConfig Trainer::peek_config(const std::string& path) {
  auto loaded = CheckpointCodec::read(path);
  return CheckpointCodec::config_from_json(loaded.manifest.at("config"));
}

}  // namespace cadnet
