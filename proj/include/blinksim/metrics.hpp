#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "flow.hpp"
#include "io.hpp"

namespace blinksim {

using Mask = std::vector<std::uint8_t>;

inline constexpr double kOutlierPixels = 3.0;
inline constexpr double kOutlierRelative = 0.05;

namespace detail {

inline void check_metric_inputs(const FlowField& pred, const FlowField& gt, std::span<const std::uint8_t> mask) {
  require(pred.same_shape(gt), "flow shape mismatch: ", pred.width, "x", pred.height, " vs ", gt.width, "x", gt.height);
  require(pred.u.size() == gt.u.size() && pred.v.size() == gt.v.size() && gt.u.size() == gt.v.size(),
          "flow buffers do not match their dimensions");
  require(mask.size() == gt.size(), "mask size ", mask.size(), " does not match flow size ", gt.size());
}

inline double epe_at(const FlowField& pred, const FlowField& gt, std::size_t i) {
  const double du = static_cast<double>(pred.u[i]) - gt.u[i];
  const double dv = static_cast<double>(pred.v[i]) - gt.v[i];
  return std::sqrt(du * du + dv * dv);
}

inline double angle_deg_at(const FlowField& pred, const FlowField& gt, std::size_t i) {
  const double up = pred.u[i], vp = pred.v[i], ug = gt.u[i], vg = gt.v[i];
  // atan2(|a x b|, a . b) for a = (up, vp, 1), b = (ug, vg, 1); exact 0 for equal vectors.
  const double cx = vp - vg, cy = ug - up, cz = up * vg - vp * ug;
  const double dot = up * ug + vp * vg + 1.0;
  return std::atan2(std::sqrt(cx * cx + cy * cy + cz * cz), dot) * 180.0 / std::numbers::pi;
}

}  // namespace detail

/// Per-pixel endpoint error; masked-out pixels are 0.
inline std::vector<double> endpoint_error(const FlowField& pred, const FlowField& gt, std::span<const std::uint8_t> mask) {
  detail::check_metric_inputs(pred, gt, mask);
  std::vector<double> out(gt.size(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mask[i]) out[i] = detail::epe_at(pred, gt, i);
  return out;
}

/// Running sums of one or more frames; merging is associative.
struct MetricSums {
  double epe = 0.0;
  double ae_deg = 0.0;
  std::size_t outliers = 0;
  std::array<std::size_t, 3> over_n{};  // EPE > 1, 2, 3
  std::size_t n_valid = 0;

  void add(const FlowField& pred, const FlowField& gt, std::span<const std::uint8_t> mask) {
    detail::check_metric_inputs(pred, gt, mask);
    for (std::size_t i = 0; i < gt.size(); ++i) {
      if (!mask[i]) continue;
      const double e = detail::epe_at(pred, gt, i);
      const double mag = std::hypot(static_cast<double>(gt.u[i]), static_cast<double>(gt.v[i]));
      epe += e;
      ae_deg += detail::angle_deg_at(pred, gt, i);
      if (e > kOutlierPixels && e > kOutlierRelative * mag) ++outliers;
      for (int n = 1; n <= 3; ++n)
        if (e > n) ++over_n[n - 1];
      ++n_valid;
    }
  }

  MetricSums& operator+=(const MetricSums& o) {
    epe += o.epe;
    ae_deg += o.ae_deg;
    outliers += o.outliers;
    for (int n = 0; n < 3; ++n) over_n[n] += o.over_n[n];
    n_valid += o.n_valid;
    return *this;
  }
};

/// Mean endpoint error; nullopt when the mask is empty.
inline std::optional<double> aee(const FlowField& pred, const FlowField& gt, std::span<const std::uint8_t> mask) {
  MetricSums s;
  s.add(pred, gt, mask);
  if (s.n_valid == 0) return std::nullopt;
  return s.epe / static_cast<double>(s.n_valid);
}

/// Percent of masked pixels with EPE > 3 px and EPE > 5% of |gt|. 0 for an empty mask.
inline double outlier_rate(const FlowField& pred, const FlowField& gt, std::span<const std::uint8_t> mask) {
  MetricSums s;
  s.add(pred, gt, mask);
  return s.n_valid ? 100.0 * static_cast<double>(s.outliers) / static_cast<double>(s.n_valid) : 0.0;
}

/// Mean angle in degrees between (u, v, 1) vectors. 0 for an empty mask.
inline double angular_error(const FlowField& pred, const FlowField& gt, std::span<const std::uint8_t> mask) {
  MetricSums s;
  s.add(pred, gt, mask);
  return s.n_valid ? s.ae_deg / static_cast<double>(s.n_valid) : 0.0;
}

/// Percent of masked pixels with EPE > n.
inline double npe(const FlowField& pred, const FlowField& gt, std::span<const std::uint8_t> mask, double n) {
  detail::require(n > 0.0, "N-PE threshold must be positive, got ", n);
  detail::check_metric_inputs(pred, gt, mask);
  std::size_t over = 0, count = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (!mask[i]) continue;
    ++count;
    if (detail::epe_at(pred, gt, i) > n) ++over;
  }
  return count ? 100.0 * static_cast<double>(over) / static_cast<double>(count) : 0.0;
}

struct EvalReport {
  std::optional<double> aee;  // pixels; empty when nothing was evaluated
  double outlier_pct = 0.0;
  double ae_deg = 0.0;
  std::array<double, 3> npe{};  // N = 1, 2, 3
  std::size_t n_valid = 0;
  std::size_t frames = 0;

  static EvalReport from_sums(const MetricSums& s, std::size_t frames) {
    EvalReport r;
    r.frames = frames;
    r.n_valid = s.n_valid;
    if (s.n_valid == 0) return r;
    const auto n = static_cast<double>(s.n_valid);
    r.aee = s.epe / n;
    r.outlier_pct = 100.0 * static_cast<double>(s.outliers) / n;
    r.ae_deg = s.ae_deg / n;
    for (int k = 0; k < 3; ++k) r.npe[k] = 100.0 * static_cast<double>(s.over_n[k]) / n;
    return r;
  }

  nlohmann::json to_json() const {
    return {{"aee", aee ? nlohmann::json(*aee) : nlohmann::json(nullptr)},
            {"outlier_pct", outlier_pct},
            {"ae_deg", ae_deg},
            {"npe", {{"1", npe[0]}, {"2", npe[1]}, {"3", npe[2]}}},
            {"n_valid", n_valid},
            {"frames", frames}};
  }
};

inline EvalReport evaluate_frame(const FlowField& pred, const FlowField& gt, std::span<const std::uint8_t> mask) {
  MetricSums s;
  s.add(pred, gt, mask);
  return EvalReport::from_sums(s, 1);
}

enum class MaskPolicy { ValidOnly, ValidNonOccluded };
enum class Aggregation { PixelWeighted, FrameWeighted };

inline Mask make_mask(const FlowField& gt, MaskPolicy policy) {
  Mask m(gt.size());
  for (std::size_t i = 0; i < m.size(); ++i)
    m[i] = gt.valid[i] && (policy == MaskPolicy::ValidOnly || !gt.occluded[i]) ? 1 : 0;
  return m;
}

/// Frame-weighted mean of per-frame reports; frames without valid pixels are skipped.
inline EvalReport average_frames(const std::vector<EvalReport>& reports) {
  EvalReport out;
  out.frames = reports.size();
  std::size_t used = 0;
  double aee_sum = 0.0;
  for (const auto& r : reports) {
    out.n_valid += r.n_valid;
    if (!r.aee) continue;
    ++used;
    aee_sum += *r.aee;
    out.outlier_pct += r.outlier_pct;
    out.ae_deg += r.ae_deg;
    for (int k = 0; k < 3; ++k) out.npe[k] += r.npe[k];
  }
  if (used == 0) return out;
  const auto n = static_cast<double>(used);
  out.aee = aee_sum / n;
  out.outlier_pct /= n;
  out.ae_deg /= n;
  for (auto& v : out.npe) v /= n;
  return out;
}

/*
 * Evaluates every *.flo in gt_dir against the same file name in pred_dir.
 * Occlusion masks are read from <stem>_occ.pgm next to the ground truth when the
 * policy needs them. All missing or mismatched files are listed in one error.
 */
inline EvalReport evaluate_sequence(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                    MaskPolicy policy, Aggregation aggregation = Aggregation::PixelWeighted) {
  namespace fs = std::filesystem;
  detail::require(fs::is_directory(gt_dir), "ground-truth directory ", gt_dir.string(), " does not exist");
  detail::require(fs::is_directory(pred_dir), "prediction directory ", pred_dir.string(), " does not exist");
  std::vector<fs::path> gt_files;
  for (const auto& e : fs::directory_iterator(gt_dir))
    if (e.is_regular_file() && e.path().extension() == ".flo") gt_files.push_back(e.path());
  std::sort(gt_files.begin(), gt_files.end());

  std::vector<std::string> problems;
  if (gt_files.empty()) problems.push_back("no .flo files in " + gt_dir.string());
  for (const auto& e : fs::directory_iterator(pred_dir))
    if (e.is_regular_file() && e.path().extension() == ".flo" && !fs::exists(gt_dir / e.path().filename()))
      problems.push_back("prediction without ground truth: " + e.path().filename().string());

  MetricSums total;
  std::vector<EvalReport> per_frame;
  for (const auto& gt_path : gt_files) {
    const auto name = gt_path.filename();
    const auto pred_path = pred_dir / name;
    if (!fs::exists(pred_path)) {
      problems.push_back("missing prediction: " + name.string());
      continue;
    }
    try {
      const FlowField pred = read_flo(pred_path);
      FlowField gt = read_flo(gt_path);
      if (!pred.same_shape(gt)) {
        problems.push_back(detail::concat("size mismatch for ", name.string(), ": ", pred.width, "x", pred.height,
                                          " vs ", gt.width, "x", gt.height));
        continue;
      }
      if (policy == MaskPolicy::ValidNonOccluded) {
        const auto occ_path = gt_dir / (gt_path.stem().string() + "_occ.pgm");
        if (!fs::exists(occ_path)) {
          problems.push_back("missing occlusion mask: " + occ_path.filename().string());
          continue;
        }
        const Image occ = decode_pgm(read_file_bytes(occ_path));
        if (occ.width != gt.width || occ.height != gt.height) {
          problems.push_back("occlusion mask size mismatch: " + occ_path.filename().string());
          continue;
        }
        for (std::size_t i = 0; i < gt.size(); ++i) gt.occluded[i] = occ.pixels[i] > 0.5f ? 1 : 0;
      }
      const Mask mask = make_mask(gt, policy);
      MetricSums s;
      s.add(pred, gt, mask);
      total += s;
      per_frame.push_back(EvalReport::from_sums(s, 1));
    } catch (const Error& err) {
      problems.push_back(name.string() + ": " + err.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "evaluation failed:";
    for (const auto& p : problems) msg += "\n  - " + p;
    throw Error(msg);
  }
  if (aggregation == Aggregation::FrameWeighted) return average_frames(per_frame);
  return EvalReport::from_sums(total, per_frame.size());
}

}  // namespace blinksim
