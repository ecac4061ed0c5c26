#pragma once

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <json.hpp>
#include <map>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "cadnet/dataset.hpp"
#include "cadnet/reid.hpp"

namespace cadnet {

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Gallery indices sorted ascending by Euclidean distance to the query;
// ties broken by gallery index (stable sort), so the result is always a
// permutation of [0, G).
inline std::vector<int> retrieve(const std::vector<float>& query,
                                 const std::vector<std::vector<float>>& gallery) {
  if (gallery.empty()) throw EvalError("retrieve: empty gallery");
  std::vector<float> dist(gallery.size());
  for (size_t i = 0; i < gallery.size(); ++i) {
    if (gallery[i].size() != query.size())
      throw EvalError("retrieve: embedding length mismatch at gallery index " +
                      std::to_string(i));
    double acc = 0;
    for (size_t j = 0; j < query.size(); ++j) {
      double d = static_cast<double>(query[j]) - gallery[i][j];
      acc += d * d;
    }
    dist[i] = static_cast<float>(std::sqrt(acc));
  }
  std::vector<int> order(gallery.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return dist[a] < dist[b]; });
  return order;
}

struct CmcCurve {
  std::vector<float> values;  // index k-1 holds CMC(k)
};

struct EmbeddedQuery {
  std::vector<float> u;
  int identity = 0;
};

// Single-shot CMC: each trial draws one gallery embedding per identity from
// its candidate pool; CMC(k) = fraction of queries whose identity appears in
// the top k, averaged over trials.
inline CmcCurve cmc(const std::vector<EmbeddedQuery>& queries,
                    const std::map<int, std::vector<std::vector<float>>>& pool,
                    int trials, Rng& rng) {
  if (queries.empty()) throw EvalError("cmc: no queries");
  if (trials < 1) throw EvalError("cmc: trials must be >= 1");
  for (const auto& [id, candidates] : pool)
    if (candidates.empty())
      throw EvalError("cmc: empty gallery pool for identity " +
                      std::to_string(id));
  for (const auto& q : queries)
    if (!pool.count(q.identity))
      throw EvalError("cmc: query identity " + std::to_string(q.identity) +
                      " missing from gallery pool");

  const int g = static_cast<int>(pool.size());
  std::vector<double> hits(static_cast<size_t>(g), 0.0);
  for (int t = 0; t < trials; ++t) {
    std::vector<std::vector<float>> gallery;
    std::vector<int> gallery_ids;
    for (const auto& [id, candidates] : pool) {
      gallery.push_back(candidates[rng.uniform_index(candidates.size())]);
      gallery_ids.push_back(id);
    }
    for (const auto& q : queries) {
      std::vector<int> order = retrieve(q.u, gallery);
      for (int k = 0; k < g; ++k)
        if (gallery_ids[static_cast<size_t>(order[static_cast<size_t>(k)])] ==
            q.identity) {
          for (int j = k; j < g; ++j) hits[static_cast<size_t>(j)] += 1.0;
          break;
        }
    }
  }
  CmcCurve out;
  double denom = static_cast<double>(trials) * queries.size();
  for (double h : hits) out.values.push_back(static_cast<float>(h / denom));
  return out;
}

// ---------------------------------------------------------------------------
// image-quality metrics
// ---------------------------------------------------------------------------

// Standard SSIM with an 8x8 uniform sliding window (stride 1), constants
// C1 = 0.01^2 and C2 = 0.03^2 on unit dynamic range, averaged over all
// windows and channels.
inline float ssim(const Image& a, const Image& b) {
  constexpr int kWin = 8;
  constexpr double c1 = 1e-4, c2 = 9e-4;
  if (a.h != b.h || a.w != b.w)
    throw EvalError("ssim: image shapes differ: " + std::to_string(a.h) + "x" +
                    std::to_string(a.w) + " vs " + std::to_string(b.h) + "x" +
                    std::to_string(b.w));
  if (a.h < kWin || a.w < kWin)
    throw EvalError("ssim: image smaller than the 8x8 window");
  constexpr double n = kWin * kWin;
  double total = 0;
  int windows = 0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y + kWin <= a.h; ++y)
      for (int x = 0; x + kWin <= a.w; ++x) {
        double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < kWin; ++dy)
          for (int dx = 0; dx < kWin; ++dx) {
            size_t i = (static_cast<size_t>(y + dy) * a.w + (x + dx)) * 3 +
                       static_cast<size_t>(c);
            double va = a.px[i], vb = b.px[i];
            sa += va; sb += vb;
            saa += va * va; sbb += vb * vb; sab += va * vb;
          }
        double ma = sa / n, mb = sb / n;
        double var_a = saa / n - ma * ma, var_b = sbb / n - mb * mb;
        double cov = sab / n - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                 ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        ++windows;
      }
  return static_cast<float>(total / windows);
}

// 10*log10(1/MSE) on unit dynamic range, capped at 100 dB (identical images).
inline float psnr(const Image& a, const Image& b) {
  if (a.h != b.h || a.w != b.w)
    throw EvalError("psnr: image shapes differ");
  double mse = 0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    double d = static_cast<double>(a.px[i]) - b.px[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.px.size());
  if (mse <= 0) return 100.0f;
  return std::min(100.0f, static_cast<float>(10.0 * std::log10(1.0 / mse)));
}

// ---------------------------------------------------------------------------
// full evaluation protocol
// ---------------------------------------------------------------------------

struct RateStats {
  float rank1 = 0, ssim = 0, psnr = 0;
};

struct EvalReport {
  float rank1 = 0, rank5 = 0, rank10 = 0;
  CmcCurve cmc;
  float ssim_mean = 0, psnr_mean = 0;
  std::map<int, RateStats> per_rate;
  int trials = 0;
};

namespace detail {

inline int eval_threads() {
  unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("CADNET_THREADS")) {
    int v = std::atoi(env);
    if (v >= 1) hw = std::min(hw, static_cast<unsigned>(v));
  }
  return static_cast<int>(hw);
}

template <typename Fn>
void parallel_for(int n, Fn&& fn) {
  int threads = std::min(eval_threads(), n);
  if (threads <= 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::atomic<int> next{0};
  for (int t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  for (auto& th : pool) th.join();
}

struct EmbedOut {
  std::vector<float> w;  // GAP of the resolution-invariant feature f
  std::vector<float> u;  // pooled joint embedding used for retrieval
  Image recovered;       // G(E(x))
};

inline EmbedOut embed_image(const Image& img, const Crgan& crgan,
                            const ReidNet& reid) {
  JointOut out = joint_forward(image_to_tensor(img), crgan, reid);
  EmbedOut e;
  e.w = global_avg_pool(out.f).data();
  e.u = out.u.data();
  e.recovered = tensor_to_image(out.recovered, 0);
  return e;
}

}  // namespace detail

// Retrieval + recovery-quality evaluation. Queries are re-synthesized from
// their HR sources at every requested rate (so rates unseen in training work),
// embedded, and ranked against single-shot HR galleries; SSIM/PSNR compare the
// recovered query image with its HR source.
inline EvalReport evaluate(const Crgan& crgan, const ReidNet& reid,
                           const MlrDataset& dataset,
                           const std::vector<int>& rates, int trials,
                           uint64_t seed) {
  if (rates.empty()) throw EvalError("evaluate: no rates given");
  if (dataset.queries.empty() || dataset.gallery.empty())
    throw EvalError("evaluate: dataset has no query/gallery split");

  // HR gallery candidate pool, embedded once
  std::map<int, std::vector<std::vector<float>>> pool;
  {
    std::vector<std::vector<float>> us(dataset.gallery.size());
    detail::parallel_for(static_cast<int>(dataset.gallery.size()), [&](int i) {
      us[static_cast<size_t>(i)] =
          detail::embed_image(dataset.gallery[static_cast<size_t>(i)].pixels,
                              crgan, reid)
              .u;
    });
    for (size_t i = 0; i < dataset.gallery.size(); ++i)
      pool[dataset.gallery[i].identity].push_back(std::move(us[i]));
  }

  EvalReport report;
  report.trials = trials;
  Rng draw_rng = Rng(seed).split(3);  // gallery-draw subsystem
  std::vector<EmbeddedQuery> all_queries;
  double ssim_sum = 0, psnr_sum = 0;
  int n_total = 0;

  for (int r : rates) {
    const int nq = static_cast<int>(dataset.query_sources.size());
    std::vector<EmbeddedQuery> rate_queries(static_cast<size_t>(nq));
    std::vector<float> ssims(static_cast<size_t>(nq)), psnrs(static_cast<size_t>(nq));
    detail::parallel_for(nq, [&](int i) {
      const Image& src = dataset.query_sources[static_cast<size_t>(i)];
      Image lr = r > 1 ? synth_lr(src, r) : src;
      auto e = detail::embed_image(lr, crgan, reid);
      rate_queries[static_cast<size_t>(i)] = {
          std::move(e.u), dataset.queries[static_cast<size_t>(i)].identity};
      ssims[static_cast<size_t>(i)] = ssim(e.recovered, src);
      psnrs[static_cast<size_t>(i)] = psnr(e.recovered, src);
    });
    Rng rate_rng = draw_rng;  // shared draws across rates
    CmcCurve curve = cmc(rate_queries, pool, trials, rate_rng);
    RateStats stats;
    stats.rank1 = curve.values.front();
    stats.ssim = std::accumulate(ssims.begin(), ssims.end(), 0.0f) / nq;
    stats.psnr = std::accumulate(psnrs.begin(), psnrs.end(), 0.0f) / nq;
    report.per_rate[r] = stats;
    for (auto& q : rate_queries) all_queries.push_back(std::move(q));
    ssim_sum += stats.ssim * nq;
    psnr_sum += stats.psnr * nq;
    n_total += nq;
  }

  report.cmc = cmc(all_queries, pool, trials, draw_rng);
  const auto& v = report.cmc.values;
  auto at_rank = [&](int k) {
    return v[static_cast<size_t>(std::min<int>(k, static_cast<int>(v.size())) - 1)];
  };
  report.rank1 = at_rank(1);
  report.rank5 = at_rank(5);
  report.rank10 = at_rank(10);
  report.ssim_mean = static_cast<float>(ssim_sum / n_total);
  report.psnr_mean = static_cast<float>(psnr_sum / n_total);
  return report;
}

inline nlohmann::json eval_report_json(const EvalReport& r) {
  nlohmann::json j;
  j["rank1"] = r.rank1;
  j["rank5"] = r.rank5;
  j["rank10"] = r.rank10;
  j["cmc"] = r.cmc.values;
  j["ssim_mean"] = r.ssim_mean;
  j["psnr_mean"] = r.psnr_mean;
  j["trials"] = r.trials;
  j["per_rate"] = nlohmann::json::object();
  for (const auto& [rate, s] : r.per_rate)
    j["per_rate"][std::to_string(rate)] = {
        {"rank1", s.rank1}, {"ssim", s.ssim}, {"psnr", s.psnr}};
  return j;
}

inline void write_eval_json(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write eval report: " + path);
  out << eval_report_json(r).dump(2) << "\n";
}

// flat one-row CSV companion to the JSON report
inline void write_eval_csv(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write eval report: " + path);
  out << "rank1,rank5,rank10,ssim_mean,psnr_mean,trials";
  for (const auto& [rate, s] : r.per_rate)
    out << ",r" << rate << "_rank1,r" << rate << "_ssim,r" << rate << "_psnr";
  out << "\n";
  char buf[96];
  auto put = [&](float v, bool lead_comma = true) {
    std::snprintf(buf, sizeof buf, "%s%.6g", lead_comma ? "," : "", v);
    out << buf;
  };
  put(r.rank1, false);
  put(r.rank5);
  put(r.rank10);
  put(r.ssim_mean);
  put(r.psnr_mean);
  out << "," << r.trials;
  for (const auto& [rate, s] : r.per_rate) {
    put(s.rank1);
    put(s.ssim);
    put(s.psnr);
  }
  out << "\n";
}

// CSV export of w = GAP(f) and the retrieval embedding u for every image in
// the dataset (train, then queries, then gallery), with identity and rate.
inline void export_embeddings(const Crgan& crgan, const ReidNet& reid,
                              const MlrDataset& dataset,
                              const std::string& path) {
  std::vector<const LabeledImage*> images;
  for (const auto& im : dataset.train) images.push_back(&im);
  for (const auto& im : dataset.queries) images.push_back(&im);
  for (const auto& im : dataset.gallery) images.push_back(&im);
  if (images.empty()) throw EvalError("export_embeddings: empty dataset");

  std::vector<detail::EmbedOut> rows(images.size());
  detail::parallel_for(static_cast<int>(images.size()), [&](int i) {
    rows[static_cast<size_t>(i)] = detail::embed_image(
        images[static_cast<size_t>(i)]->pixels, crgan, reid);
  });

  std::ofstream out(path);
  if (!out) throw IoError("cannot write embedding CSV: " + path);
  out << "identity,rate";
  for (size_t i = 0; i < rows[0].w.size(); ++i) out << ",w_" << i;
  for (size_t i = 0; i < rows[0].u.size(); ++i) out << ",u_" << i;
  out << "\n";
  char buf[64];
  for (size_t i = 0; i < images.size(); ++i) {
    out << images[i]->identity << "," << images[i]->rate;
    for (float v : rows[i].w) {
      std::snprintf(buf, sizeof buf, ",%.7g", v);
      out << buf;
    }
    for (float v : rows[i].u) {
      std::snprintf(buf, sizeof buf, ",%.7g", v);
      out << buf;
    }
    out << "\n";
  }
}

}  // namespace cadnet
