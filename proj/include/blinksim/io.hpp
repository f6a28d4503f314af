#pragma once

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "error.hpp"
#include "events.hpp"
#include "flow.hpp"
#include "image.hpp"

namespace blinksim {

using Bytes = std::vector<std::uint8_t>;

inline Bytes read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(detail::concat("cannot open ", path.string(), " for reading"));
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(detail::concat("cannot open ", path.string(), " for writing"));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(detail::concat("short write to ", path.string()));
}

namespace detail {

template <typename T>
void put_le(Bytes& out, T value) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t, std::int64_t>, T>>;
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(std::span<const std::uint8_t> in, std::size_t offset) {
  using U = std::make_unsigned_t<std::conditional_t<std::is_floating_point_v<T>,
                                                    std::conditional_t<sizeof(T) == 4, std::int32_t, std::int64_t>, T>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(in[offset + i]) << (8 * i);
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

inline constexpr std::size_t kMaxReportedIssues = 32;

}  // namespace detail

// ---------------------------------------------------------------------------
// EVT1 event files
//
//   offset 0   "EVT1"
//   offset 4   u32 width
//   offset 8   u32 height
//   offset 12  u64 record count
//   offset 20  records, 16 bytes each: u64 t (µs), u16 x, u16 y, i8 p, 3 zero bytes
//
// All integers little-endian.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kEvt1HeaderSize = 20;
inline constexpr std::size_t kEvt1RecordSize = 16;

inline Bytes encode_events(const EventStream& stream) {
  stream.validate();
  Bytes out;
  out.reserve(kEvt1HeaderSize + kEvt1RecordSize * stream.size());
  out.insert(out.end(), {'E', 'V', 'T', '1'});
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.width));
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(stream.height));
  detail::put_le<std::uint64_t>(out, stream.size());
  for (const Event& e : stream.events) {
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(e.t));
    detail::put_le<std::uint16_t>(out, e.x);
    detail::put_le<std::uint16_t>(out, e.y);
    out.push_back(static_cast<std::uint8_t>(e.p));
    out.insert(out.end(), {0, 0, 0});
  }
  return out;
}

inline EventStream decode_events(std::span<const std::uint8_t> bytes) {
  using Issue = FormatError::Issue;
  std::vector<Issue> issues;
  auto fail = [&]() { throw FormatError("invalid EVT1 data", std::move(issues)); };

  if (bytes.size() < kEvt1HeaderSize) {
    issues.push_back({bytes.size(), detail::concat("truncated header: ", bytes.size(), " of ",
                                                    kEvt1HeaderSize, " bytes")});
    fail();
  }
  if (std::memcmp(bytes.data(), "EVT1", 4) != 0) {
    issues.push_back({0, "bad magic (expected \"EVT1\")"});
    fail();
  }
  const auto width = detail::get_le<std::uint32_t>(bytes, 4);
  const auto height = detail::get_le<std::uint32_t>(bytes, 8);
  const auto count = detail::get_le<std::uint64_t>(bytes, 12);
  if (width == 0 || width > 65536) issues.push_back({4, detail::concat("invalid width ", width)});
  if (height == 0 || height > 65536) issues.push_back({8, detail::concat("invalid height ", height)});
  const std::size_t available = (bytes.size() - kEvt1HeaderSize) / kEvt1RecordSize;
  if (count > available) {
    issues.push_back({12, detail::concat("header declares ", count, " records but only ", available,
                                         " fit in ", bytes.size(), " bytes (truncated)")});
  } else if (bytes.size() != kEvt1HeaderSize + kEvt1RecordSize * count) {
    issues.push_back({kEvt1HeaderSize + kEvt1RecordSize * count,
                      detail::concat(bytes.size() - kEvt1HeaderSize - kEvt1RecordSize * count,
                                     " trailing bytes after last record")});
  }
  if (!issues.empty()) fail();

  EventStream stream{static_cast<int>(width), static_cast<int>(height), {}};
  stream.events.reserve(count);
  // Time order is checked globally, so a per-pixel repeat can only occur inside a
  // run of equal timestamps.
  std::unordered_set<std::uint32_t> run_pixels;
  Timestamp prev = 0;
  std::size_t extra = 0;
  auto report = [&](std::size_t offset, std::string message) {
    if (issues.size() < detail::kMaxReportedIssues) issues.push_back({offset, std::move(message)});
    else ++extra;
  };
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::size_t off = kEvt1HeaderSize + kEvt1RecordSize * k;
    const auto t = detail::get_le<std::uint64_t>(bytes, off);
    const auto x = detail::get_le<std::uint16_t>(bytes, off + 8);
    const auto y = detail::get_le<std::uint16_t>(bytes, off + 10);
    const auto p = static_cast<std::int8_t>(bytes[off + 12]);
    bool ok = true;
    if (t > static_cast<std::uint64_t>(std::numeric_limits<Timestamp>::max())) {
      report(off, detail::concat("record ", k, ": timestamp ", t, " out of range"));
      ok = false;
    }
    if (x >= width || y >= height) {
      report(off + 8, detail::concat("record ", k, ": pixel (", x, ",", y, ") outside ", width, "x", height));
      ok = false;
    }
    if (p != 1 && p != -1) {
      report(off + 12, detail::concat("record ", k, ": polarity ", int{p}, " not in {-1, +1}"));
      ok = false;
    }
    if (bytes[off + 13] != 0 || bytes[off + 14] != 0 || bytes[off + 15] != 0)
      report(off + 13, detail::concat("record ", k, ": non-zero padding"));
    if (!ok) continue;
    const auto ts = static_cast<Timestamp>(t);
    if (ts < prev) report(off, detail::concat("record ", k, ": time ", ts, " before previous ", prev));
    if (ts != prev) run_pixels.clear();
    if (!run_pixels.insert((std::uint32_t{y} << 16) | x).second)
      report(off, detail::concat("record ", k, ": repeated time at pixel (", x, ",", y, ")"));
    prev = std::max(prev, ts);
    stream.events.push_back(Event{ts, x, y, p});
  }
  if (extra > 0) issues.push_back({bytes.size(), detail::concat(extra, " further issues omitted")});
  if (!issues.empty()) fail();
  return stream;
}

inline void write_events(const std::filesystem::path& path, const EventStream& stream) {
  write_file_bytes(path, encode_events(stream));
}

inline EventStream read_events(const std::filesystem::path& path) {
  return decode_events(read_file_bytes(path));
}

// ---------------------------------------------------------------------------
// Middlebury .flo: "PIEH" (float 202021.25), i32 width, i32 height, row-major
// interleaved float32 (u, v). Pixels without flow hold kInvalidFlow.
// ---------------------------------------------------------------------------

inline constexpr float kFloTag = 202021.25f;

inline Bytes encode_flo(const FlowField& flow) {
  detail::require(flow.u.size() == static_cast<std::size_t>(flow.width) * flow.height &&
                      flow.v.size() == flow.u.size() && flow.valid.size() == flow.u.size(),
                  "flow field buffers do not match its dimensions");
  Bytes out;
  out.reserve(12 + 8 * flow.size());
  detail::put_le<float>(out, kFloTag);
  detail::put_le<std::int32_t>(out, flow.width);
  detail::put_le<std::int32_t>(out, flow.height);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const bool valid = flow.valid[i] != 0;
    detail::require(!valid || (std::isfinite(flow.u[i]) && std::isfinite(flow.v[i])),
                    "non-finite flow at valid pixel index ", i);
    // Invalid pixels keep stored values that already read back as unknown, so
    // decode followed by encode reproduces the input bytes.
    const bool raw = valid || !(std::abs(flow.u[i]) <= 1e9f && std::abs(flow.v[i]) <= 1e9f);
    detail::put_le<float>(out, raw ? flow.u[i] : kInvalidFlow);
    detail::put_le<float>(out, raw ? flow.v[i] : kInvalidFlow);
  }
  return out;
}

inline FlowField decode_flo(std::span<const std::uint8_t> bytes) {
  using Issue = FormatError::Issue;
  if (bytes.size() < 12)
    throw FormatError("invalid .flo data", {Issue{bytes.size(), "truncated header"}});
  if (detail::get_le<float>(bytes, 0) != kFloTag)
    throw FormatError("invalid .flo data", {Issue{0, "bad tag (expected \"PIEH\" / 202021.25)"}});
  const auto w = detail::get_le<std::int32_t>(bytes, 4);
  const auto h = detail::get_le<std::int32_t>(bytes, 8);
  if (w < 0 || h < 0 || w > 1 << 20 || h > 1 << 20)
    throw FormatError("invalid .flo data", {Issue{4, detail::concat("invalid size ", w, "x", h)}});
  const std::size_t expected = 12 + 8 * static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  if (bytes.size() != expected)
    throw FormatError("invalid .flo data",
                      {Issue{std::min(bytes.size(), expected),
                             detail::concat("expected ", expected, " bytes, got ", bytes.size())}});
  FlowField flow(w, h);
  for (std::size_t i = 0; i < flow.size(); ++i) {
    flow.u[i] = detail::get_le<float>(bytes, 12 + 8 * i);
    flow.v[i] = detail::get_le<float>(bytes, 16 + 8 * i);
    flow.valid[i] = std::abs(flow.u[i]) <= 1e9f && std::abs(flow.v[i]) <= 1e9f ? 1 : 0;
  }
  return flow;
}

inline void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  write_file_bytes(path, encode_flo(flow));
}

inline FlowField read_flo(const std::filesystem::path& path) { return decode_flo(read_file_bytes(path)); }

// ---------------------------------------------------------------------------
// PFM (grayscale "Pf", scale -1.0 = little-endian, rows stored bottom-up) and
// binary PGM ("P5").
// ---------------------------------------------------------------------------

namespace detail {

/// Whitespace-separated header tokens of a netpbm-style file; '#' starts a comment.
class HeaderReader {
 public:
  explicit HeaderReader(std::span<const std::uint8_t> bytes, std::string_view what)
      : bytes_(bytes), what_(what) {}

  std::string token() {
    skip_space();
    const std::size_t start = pos_;
    while (pos_ < bytes_.size() && !std::isspace(bytes_[pos_])) ++pos_;
    if (start == pos_) fail(start, "unexpected end of header");
    return std::string(reinterpret_cast<const char*>(bytes_.data()) + start, pos_ - start);
  }

  template <typename T>
  T number() {
    const std::size_t at = pos_;
    const std::string s = token();
    T value{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) fail(at, detail::concat("malformed number '", s, "'"));
    return value;
  }

  /// Consumes the single whitespace byte that ends the header.
  std::size_t end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) fail(pos_, "missing whitespace after header");
    return ++pos_;
  }

  [[noreturn]] void fail(std::size_t offset, std::string message) const {
    throw FormatError(detail::concat("invalid ", what_, " data"), {{offset, std::move(message)}});
  }

 private:
  void skip_space() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) ++pos_;
      else if (bytes_[pos_] == '#')
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      else break;
    }
  }

  std::span<const std::uint8_t> bytes_;
  std::string_view what_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Bytes encode_pfm(const Image& image) {
  const std::string header = detail::concat("Pf\n", image.width, " ", image.height, "\n-1.0\n");
  Bytes out(header.begin(), header.end());
  out.reserve(header.size() + 4 * image.size());
  for (int y = image.height - 1; y >= 0; --y)
    for (int x = 0; x < image.width; ++x) detail::put_le<float>(out, image.at(x, y));
  return out;
}

inline Image decode_pfm(std::span<const std::uint8_t> bytes) {
  detail::HeaderReader header(bytes, "PFM");
  const std::string magic = header.token();
  if (magic != "Pf") header.fail(0, detail::concat("expected grayscale \"Pf\", got \"", magic, "\""));
  const int w = header.number<int>();
  const int h = header.number<int>();
  const double scale = header.number<double>();
  const std::size_t data = header.end_header();
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) header.fail(3, detail::concat("invalid size ", w, "x", h));
  if (scale == 0.0 || !std::isfinite(scale)) header.fail(data - 1, "scale must be non-zero");
  const std::size_t expected = data + 4 * static_cast<std::size_t>(w) * h;
  if (bytes.size() != expected)
    header.fail(std::min(bytes.size(), expected), detail::concat("expected ", expected, " bytes, got ", bytes.size()));
  const bool little = scale < 0.0;
  Image image(w, h);
  std::size_t off = data;
  for (int y = h - 1; y >= 0; --y) {
    for (int x = 0; x < w; ++x, off += 4) {
      std::uint32_t bits = little ? detail::get_le<std::uint32_t>(bytes, off)
                                  : (std::uint32_t{bytes[off]} << 24 | std::uint32_t{bytes[off + 1]} << 16 |
                                     std::uint32_t{bytes[off + 2]} << 8 | bytes[off + 3]);
      image.at(x, y) = std::bit_cast<float>(bits);
    }
  }
  return image;
}

inline void write_pfm(const std::filesystem::path& path, const Image& image) {
  write_file_bytes(path, encode_pfm(image));
}

inline Image read_pfm(const std::filesystem::path& path) { return decode_pfm(read_file_bytes(path)); }

/// 8-bit binary PGM of a mask, 0 or 255 per pixel.
inline Bytes encode_mask_pgm(int width, int height, std::span<const std::uint8_t> mask) {
  detail::require(mask.size() == static_cast<std::size_t>(width) * height, "mask size mismatch");
  const std::string header = detail::concat("P5\n", width, " ", height, "\n255\n");
  Bytes out(header.begin(), header.end());
  for (auto m : mask) out.push_back(m ? 255 : 0);
  return out;
}

/// Binary PGM (8- or 16-bit) scaled to [0, 1].
inline Image decode_pgm(std::span<const std::uint8_t> bytes) {
  detail::HeaderReader header(bytes, "PGM");
  if (header.token() != "P5") header.fail(0, "expected binary PGM \"P5\"");
  const int w = header.number<int>();
  const int h = header.number<int>();
  const int maxval = header.number<int>();
  const std::size_t data = header.end_header();
  if (w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16) header.fail(3, detail::concat("invalid size ", w, "x", h));
  if (maxval <= 0 || maxval > 65535) header.fail(data - 1, detail::concat("invalid maxval ", maxval));
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  const std::size_t expected = data + bpp * static_cast<std::size_t>(w) * h;
  if (bytes.size() != expected)
    header.fail(std::min(bytes.size(), expected), detail::concat("expected ", expected, " bytes, got ", bytes.size()));
  Image image(w, h);
  for (std::size_t i = 0; i < image.size(); ++i) {
    const std::size_t off = data + bpp * i;
    const unsigned v = bpp == 1 ? bytes[off] : (unsigned{bytes[off]} << 8 | bytes[off + 1]);
    image.pixels[i] = static_cast<float>(static_cast<double>(v) / maxval);
  }
  return image;
}

/// Loads a texture or frame by extension (.pfm or .pgm).
inline Image read_image(const std::filesystem::path& path) {
  const auto ext = path.extension().string();
  if (ext == ".pfm") return read_pfm(path);
  if (ext == ".pgm") return decode_pgm(read_file_bytes(path));
  throw InvalidArgument(detail::concat("unsupported image format: ", path.string()));
}

// ---------------------------------------------------------------------------
// Voxel grid
// ---------------------------------------------------------------------------

struct VoxelGrid {
  int bins = 0;
  int height = 0;
  int width = 0;
  std::vector<double> values;  // bins x height x width

  double at(int b, int y, int x) const {
    return values[(static_cast<std::size_t>(b) * height + y) * width + x];
  }
  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }
};

/*
 * Accumulates event polarities into `bins` temporal bins over [t0, t1]. Each event
 * is split linearly between the two nearest bin centres t0 + (b + 0.5) * dt; events
 * outside the span of the centres go entirely to the first or last bin.
 */
inline VoxelGrid voxelize(const EventStream& stream, Timestamp t0, Timestamp t1, int bins) {
  detail::require(t0 < t1, "voxel window must be non-empty: ", t0, " >= ", t1);
  detail::require(bins >= 1, "need at least one bin, got ", bins);
  VoxelGrid grid{bins, stream.height, stream.width,
                 std::vector<double>(static_cast<std::size_t>(bins) * stream.height * stream.width, 0.0)};
  const double bin_us = static_cast<double>(t1 - t0) / bins;
  const std::size_t plane = static_cast<std::size_t>(stream.height) * stream.width;
  for (const Event& e : stream.events) {
    if (e.t < t0 || e.t > t1) continue;
    const std::size_t pix = static_cast<std::size_t>(e.y) * stream.width + e.x;
    const double pos = static_cast<double>(e.t - t0) / bin_us - 0.5;
    if (pos <= 0.0) {
      grid.values[pix] += e.p;
    } else if (pos >= bins - 1) {
      grid.values[(bins - 1) * plane + pix] += e.p;
    } else {
      const int b = static_cast<int>(pos);
      const double w = pos - b;
      grid.values[b * plane + pix] += e.p * (1.0 - w);
      grid.values[(b + 1) * plane + pix] += e.p * w;
    }
  }
  return grid;
}

/// NumPy .npy (format 1.0), little-endian float64, shape (bins, height, width).
inline Bytes encode_npy(const VoxelGrid& grid) {
  std::string dict = detail::concat("{'descr': '<f8', 'fortran_order': False, 'shape': (", grid.bins, ", ",
                                    grid.height, ", ", grid.width, "), }");
  const std::size_t unpadded = 10 + dict.size() + 1;
  dict.append((64 - unpadded % 64) % 64, ' ');
  dict.push_back('\n');
  Bytes out{0x93, 'N', 'U', 'M', 'P', 'Y', 1, 0};
  detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(dict.size()));
  out.insert(out.end(), dict.begin(), dict.end());
  for (double v : grid.values) detail::put_le<double>(out, v);
  return out;
}

// ---------------------------------------------------------------------------
// Dataset directory layout
//
//   root/scene.json        scene description
//   root/frames/NNNNNN.pfm densely sampled linear-intensity frames
//   root/flow/NNNNNN.flo   ground-truth flow per evaluation interval
//   root/flow/NNNNNN_occ.pgm  occlusion mask for the same interval
//   root/events.evt1       event stream
//   root/meta.json         timestamps and configuration echo
// ---------------------------------------------------------------------------

struct DatasetLayout {
  std::filesystem::path root;

  std::filesystem::path scene_json() const { return root / "scene.json"; }
  std::filesystem::path frames_dir() const { return root / "frames"; }
  std::filesystem::path flow_dir() const { return root / "flow"; }
  std::filesystem::path events_file() const { return root / "events.evt1"; }
  std::filesystem::path meta_json() const { return root / "meta.json"; }
  std::filesystem::path manifest() const { return root / "manifest.sha256"; }

  static std::string indexed(std::size_t i, std::string_view suffix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06zu", i);
    return std::string(buf) + std::string(suffix);
  }
  std::filesystem::path frame(std::size_t i) const { return frames_dir() / indexed(i, ".pfm"); }
  std::filesystem::path flow(std::size_t i) const { return flow_dir() / indexed(i, ".flo"); }
  std::filesystem::path occlusion(std::size_t i) const { return flow_dir() / indexed(i, "_occ.pgm"); }

  nlohmann::json read_meta() const {
    std::ifstream in(meta_json());
    if (!in) throw Error(detail::concat("missing ", meta_json().string()));
    return nlohmann::json::parse(in);
  }

  /// Checks that meta.json timestamps increase and that every listed file exists.
  void validate() const {
    const auto meta = read_meta();
    const auto frames = meta.at("frame_timestamps_us").get<std::vector<Timestamp>>();
    for (std::size_t k = 1; k < frames.size(); ++k)
      detail::require(frames[k] > frames[k - 1], "meta frame timestamps not increasing at ", k);
    for (std::size_t k = 0; k < frames.size(); ++k)
      detail::require(std::filesystem::exists(frame(k)), "missing frame file ", frame(k).string());
    detail::require(!std::filesystem::exists(frame(frames.size())), "more frame files than meta timestamps");
    const auto flows = meta.at("flow_intervals_us").get<std::vector<std::pair<Timestamp, Timestamp>>>();
    for (std::size_t k = 0; k < flows.size(); ++k) {
      detail::require(flows[k].first < flows[k].second, "empty flow interval ", k);
      detail::require(k == 0 || flows[k].first >= flows[k - 1].first, "flow intervals not increasing at ", k);
      detail::require(std::filesystem::exists(flow(k)) && std::filesystem::exists(occlusion(k)),
                      "missing flow files for interval ", k);
    }
    detail::require(!std::filesystem::exists(flow(flows.size())), "more flow files than meta intervals");
    detail::require(std::filesystem::exists(events_file()), "missing ", events_file().string());
    detail::require(std::filesystem::exists(scene_json()), "missing ", scene_json().string());
  }
};

}  // namespace blinksim
