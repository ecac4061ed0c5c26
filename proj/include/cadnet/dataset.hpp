#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cadnet/image.hpp"
#include "cadnet/png_io.hpp"
#include "cadnet/rng.hpp"

namespace cadnet {

struct DatasetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Train/test split with disjoint identities. Query/gallery entries keep
// their HR source pixels alongside: queries are re-synthesized at arbitrary
// rates during evaluation (including rates unseen in training).
struct MlrDataset {
  std::vector<LabeledImage> train;    // HR sources, rate 1
  std::vector<LabeledImage> queries;  // LR at their tagged rate
  std::vector<LabeledImage> gallery;  // HR
  std::vector<Image> query_sources;   // HR originals, parallel to queries
  int num_identities = 0;             // distinct training identities

  void check_invariants() const {
    std::set<int> train_ids, test_ids, gallery_ids;
    for (const auto& im : train) train_ids.insert(im.identity);
    for (const auto& im : gallery) gallery_ids.insert(im.identity);
    for (const auto& im : queries) test_ids.insert(im.identity);
    for (const auto& im : gallery) test_ids.insert(im.identity);
    for (int id : test_ids)
      if (train_ids.count(id))
        throw DatasetError("identity " + std::to_string(id) +
                           " appears in both train and test splits");
    for (const auto& im : queries)
      if (!gallery_ids.count(im.identity))
        throw DatasetError("query identity " + std::to_string(im.identity) +
                           " missing from gallery");
    if (queries.size() != query_sources.size())
      throw DatasetError("query/source lists out of sync");
  }
};

// ---------------------------------------------------------------------------
// toy dataset
// ---------------------------------------------------------------------------

struct ToyOptions {
  bool jitter = true;
  std::vector<int> rates = {2, 3, 4};  // LR rates for the query camera
};

namespace detail {

// Every identity uses the same 8-color palette: colors 0-3 in some order over
// the top four bands, colors 4-7 over the bottom four. Both half-image color
// sets are therefore identical across identities, so coarse spatial statistics
// (anything a pooled embedding of an untrained network sees) carry no identity
// signal — only the fine within-half band order does.
inline const std::array<std::array<float, 3>, 8>& toy_palette() {
  static const std::array<std::array<float, 3>, 8> p = {{
      {0.90f, 0.20f, 0.20f}, {0.20f, 0.90f, 0.20f}, {0.20f, 0.30f, 0.90f},
      {0.90f, 0.90f, 0.20f}, {0.90f, 0.30f, 0.90f}, {0.20f, 0.90f, 0.90f},
      {0.95f, 0.60f, 0.20f}, {0.50f, 0.50f, 0.50f},
  }};
  return p;
}

struct ToyIdentity {
  std::array<int, 8> band_order;  // permutation of the shared palette
  float stripe_freq_y, stripe_freq_x, stripe_phase;
};

inline ToyIdentity make_identity(Rng& rng,
                                 std::set<std::array<int, 8>>& used) {
  ToyIdentity id{};
  std::vector<int> top = {0, 1, 2, 3}, bottom = {4, 5, 6, 7};
  do {
    rng.shuffle(top);
    rng.shuffle(bottom);
    std::copy(top.begin(), top.end(), id.band_order.begin());
    std::copy(bottom.begin(), bottom.end(), id.band_order.begin() + 4);
  } while (!used.insert(id.band_order).second);
  // high-frequency mid-band texture; this is the detail LR synthesis destroys
  id.stripe_freq_y = rng.uniform(1.2f, 3.2f);
  id.stripe_freq_x = rng.uniform(1.2f, 3.2f);
  id.stripe_phase = rng.uniform(0.0f, 6.28f);
  return id;
}

inline Image render_identity(const ToyIdentity& id, int h, int w, int camera,
                             Rng& rng, bool jitter) {
  float dy = 0.0f, dx = 0.0f, brightness = 0.0f, noise_sigma = 0.0f;
  float chan_gain[3] = {1.0f, 1.0f, 1.0f};
  if (jitter) {
    dy = rng.uniform(-2.0f, 2.0f);
    dx = rng.uniform(-1.5f, 1.5f);
    brightness = rng.uniform(-0.15f, 0.15f);
    for (float& g : chan_gain) g = rng.uniform(0.75f, 1.25f);
    noise_sigma = 0.02f;
  }
  // fixed per-camera photometric response; forces resolution/camera-invariant
  // features instead of raw color matching
  const float cam_gain[2][3] = {{1.0f, 1.0f, 1.0f}, {0.82f, 0.95f, 1.12f}};
  const float* gain = cam_gain[camera % 2];

  Image img = Image::filled(h, w);
  const auto& palette = toy_palette();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      float yy = static_cast<float>(y) + dy;
      float xx = static_cast<float>(x) + dx;
      float frac = std::clamp(yy / static_cast<float>(h), 0.0f, 0.999f);
      int band = static_cast<int>(frac * 8.0f);
      // identity-specific texture on the two mid bands; multiplicative so the
      // palette histogram stays shared across identities
      float shade = 1.0f;
      if (band == 3 || band == 4)
        shade = 0.65f + 0.35f * (0.5f + 0.5f * std::sin(id.stripe_freq_y * yy +
                                                        id.stripe_freq_x * xx +
                                                        id.stripe_phase));
      for (int c = 0; c < 3; ++c) {
        float v = palette[static_cast<size_t>(
            id.band_order[static_cast<size_t>(band)])][static_cast<size_t>(c)] *
                  shade;
        v = v * gain[c] * chan_gain[c] + brightness;
        if (noise_sigma > 0.0f) v += noise_sigma * rng.normal();
        v = std::clamp(v, 0.0f, 1.0f);
        // quantize to the 8-bit grid so PNG round trips are bit-exact
        img.at(y, x, c) = std::round(v * 255.0f) / 255.0f;
      }
    }
  return img;
}

}  // namespace detail

// num_ids training identities plus num_ids disjoint test identities, each
// with imgs_per_id images on alternating cameras. Camera-0 test images
// become LR queries (rate drawn from opts.rates), camera-1 test images the
// HR gallery.
inline MlrDataset make_toy_dataset(int num_ids, int imgs_per_id, int h, int w,
                                   uint64_t seed, ToyOptions opts = {}) {
  if (num_ids < 2)
    throw std::invalid_argument("make_toy_dataset: need at least 2 identities");
  if (imgs_per_id < 2)
    throw std::invalid_argument(
        "make_toy_dataset: need at least 2 images per identity");
  if (h < 8 || w < 8)
    throw std::invalid_argument("make_toy_dataset: degenerate image size");

  Rng root(seed);
  Rng id_rng = root.split(1);
  Rng img_rng = root.split(2);
  Rng rate_rng = root.split(3);

  MlrDataset ds;
  ds.num_identities = num_ids;
  std::set<std::array<int, 8>> used_orders;
  for (int id = 0; id < 2 * num_ids; ++id) {
    auto identity = detail::make_identity(id_rng, used_orders);
    bool is_train = id < num_ids;
    for (int j = 0; j < imgs_per_id; ++j) {
      int camera = j % 2;
      Image img =
          detail::render_identity(identity, h, w, camera, img_rng, opts.jitter);
      LabeledImage li{std::move(img), id, camera, 1};
      if (is_train) {
        ds.train.push_back(std::move(li));
      } else if (camera == 0) {
        int r = opts.rates[rate_rng.uniform_index(opts.rates.size())];
        ds.query_sources.push_back(li.pixels);
        ds.queries.push_back(synth_lr(li, r));
      } else {
        ds.gallery.push_back(std::move(li));
      }
    }
  }
  ds.check_invariants();
  return ds;
}

// ---------------------------------------------------------------------------
// PK-structured batches
// ---------------------------------------------------------------------------

// K HR and K synthesized-LR samples for each of P identities; the two
// streams are independently shuffled, but every LR entry carries its own HR
// ground truth for the reconstruction loss.
struct TrainBatch {
  std::vector<const Image*> hr;
  std::vector<int> hr_labels;
  std::vector<Image> lr;
  std::vector<Image> lr_truth;
  std::vector<int> lr_labels;
  std::vector<int> lr_rates;
};

class BatchSampler {
 public:
  BatchSampler(const MlrDataset& dataset, int p, int k, Rng rng,
               std::vector<int> rates = {2, 3, 4})
      : dataset_(&dataset), p_(p), k_(k), rng_(rng), rates_(std::move(rates)) {
    for (size_t i = 0; i < dataset.train.size(); ++i)
      by_identity_[dataset.train[i].identity].push_back(i);
    if (static_cast<int>(by_identity_.size()) < p_)
      throw DatasetError("BatchSampler: only " +
                         std::to_string(by_identity_.size()) +
                         " identities available for P=" + std::to_string(p_));
    for (const auto& [id, idxs] : by_identity_) identities_.push_back(id);
  }

  TrainBatch next(int batch_size) {
    if (batch_size != p_ * k_)
      throw std::invalid_argument("next_batch: batch size " +
                                  std::to_string(batch_size) +
                                  " != P*K = " + std::to_string(p_ * k_));
    // P distinct identities per draw
    std::vector<int> ids = identities_;
    rng_.shuffle(ids);
    ids.resize(static_cast<size_t>(p_));

    std::vector<size_t> hr_idx = draw_samples(ids);
    std::vector<size_t> lr_idx = draw_samples(ids);
    rng_.shuffle(hr_idx);  // independent stream orders
    rng_.shuffle(lr_idx);

    TrainBatch b;
    for (size_t i : hr_idx) {
      b.hr.push_back(&dataset_->train[i].pixels);
      b.hr_labels.push_back(dataset_->train[i].identity);
    }
    for (size_t i : lr_idx) {
      const auto& src = dataset_->train[i];
      int r = rates_[rng_.uniform_index(rates_.size())];
      b.lr.push_back(synth_lr(src, r).pixels);
      b.lr_truth.push_back(src.pixels);
      b.lr_labels.push_back(src.identity);
      b.lr_rates.push_back(r);
    }
    return b;
  }

  Rng& rng() { return rng_; }

 private:
  std::vector<size_t> draw_samples(const std::vector<int>& ids) {
    std::vector<size_t> out;
    for (int id : ids) {
      const auto& pool = by_identity_.at(id);
      if (static_cast<int>(pool.size()) >= k_) {
        std::vector<size_t> shuffled = pool;
        rng_.shuffle(shuffled);
        out.insert(out.end(), shuffled.begin(), shuffled.begin() + k_);
      } else {
        for (int j = 0; j < k_; ++j)
          out.push_back(pool[rng_.uniform_index(pool.size())]);
      }
    }
    return out;
  }

  const MlrDataset* dataset_;
  int p_, k_;
  Rng rng_;
  std::vector<int> rates_;
  std::map<int, std::vector<size_t>> by_identity_;
  std::vector<int> identities_;
};

// ---------------------------------------------------------------------------
// on-disk format: <root>/images/*.png + <root>/index.tsv
// columns: path, identity, camera, rate, split   (split ∈ train|query|gallery)
// pixels on disk are always the HR source; LR is re-synthesized from the
// rate column at load time.
// ---------------------------------------------------------------------------

inline void save_dataset(const MlrDataset& ds, const std::string& root) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(root) / "images");
  std::ofstream index(fs::path(root) / "index.tsv");
  if (!index) throw IoError("cannot write index file under " + root);

  int counter = 0;
  auto emit = [&](const LabeledImage& li, const Image& source,
                  const std::string& split) {
    std::ostringstream name;
    name << "images/" << split << "_" << std::setfill('0') << std::setw(5)
         << counter++ << ".png";
    write_png_rgb8((fs::path(root) / name.str()).string(), source.px, source.h,
                   source.w);
    index << name.str() << "\t" << li.identity << "\t" << li.camera << "\t"
          << li.rate << "\t" << split << "\n";
  };
  for (const auto& li : ds.train) emit(li, li.pixels, "train");
  for (size_t i = 0; i < ds.queries.size(); ++i)
    emit(ds.queries[i], ds.query_sources[i], "query");
  for (const auto& li : ds.gallery) emit(li, li.pixels, "gallery");
}

inline MlrDataset load_dataset(const std::string& root,
                               const std::string& index_file = "index.tsv") {
  namespace fs = std::filesystem;
  fs::path index_path = fs::path(root) / index_file;
  std::ifstream index(index_path);
  if (!index) throw IoError("missing index file: " + index_path.string());

  MlrDataset ds;
  std::set<int> train_ids;
  std::string line;
  int line_no = 0;
  while (std::getline(index, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string path, split;
    int identity, camera, rate;
    std::string id_s, cam_s, rate_s;
    if (!std::getline(ss, path, '\t') || !std::getline(ss, id_s, '\t') ||
        !std::getline(ss, cam_s, '\t') || !std::getline(ss, rate_s, '\t') ||
        !std::getline(ss, split))
      throw DatasetError("malformed index line " + std::to_string(line_no) +
                         " in " + index_path.string());
    try {
      identity = std::stoi(id_s);
      camera = std::stoi(cam_s);
      rate = std::stoi(rate_s);
    } catch (const std::exception&) {
      throw DatasetError("malformed index line " + std::to_string(line_no) +
                         " in " + index_path.string());
    }
    if (rate < 1)
      throw DatasetError("invalid rate on index line " +
                         std::to_string(line_no));

    fs::path img_path = fs::path(root) / path;
    if (!fs::exists(img_path))
      throw DatasetError("index line " + std::to_string(line_no) +
                         " references absent image: " + img_path.string());
    Image source;
    source.px = read_png_rgb8(img_path.string(), source.h, source.w);

    LabeledImage li{source, identity, camera, rate};
    if (rate > 1) li = synth_lr(LabeledImage{source, identity, camera, 1}, rate);

    if (split == "train") {
      // training always works from the HR source; rates are drawn per batch
      ds.train.push_back(LabeledImage{std::move(source), identity, camera, 1});
      train_ids.insert(identity);
    } else if (split == "query") {
      ds.queries.push_back(std::move(li));
      ds.query_sources.push_back(std::move(source));
    } else if (split == "gallery") {
      ds.gallery.push_back(std::move(li));
    } else {
      throw DatasetError("unknown split '" + split + "' on index line " +
                         std::to_string(line_no));
    }
  }
  ds.num_identities = static_cast<int>(train_ids.size());
  ds.check_invariants();
  return ds;
}

}  // namespace cadnet
