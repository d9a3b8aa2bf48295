#include "cmada/volume_io.hpp"

#include <zlib.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

#include <fmt/format.h>

namespace cmada {

namespace fs = std::filesystem;

namespace {

static_assert(std::endian::native == std::endian::little,
              "volume serialization assumes a little-endian host");

bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

bool is_nifti(const fs::path& p) {
  const auto name = p.filename().string();
  return has_suffix(name, ".nii") || has_suffix(name, ".nii.gz");
}

// ---------------------------------------------------------------- raw grid

struct RawHeader {
  std::string kind;
  Shape3 shape{};
  Spacing3 spacing{};
  std::string dtype;
  int classes = 0;
};

RawHeader read_raw_header(std::istream& in, const fs::path& path) {
  std::string line;
  if (!std::getline(in, line) || line != "CMADA-RAW 1") {
    throw IoError("not a raw-grid volume file: " + path.string());
  }
  RawHeader h;
  bool has_shape = false, has_spacing = false;
  while (std::getline(in, line)) {
    if (line == "end_header") {
      if (!has_shape || !has_spacing || h.dtype.empty() || h.kind.empty()) {
        throw IoError("incomplete raw-grid header: " + path.string());
      }
      return h;
    }
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "kind:") {
      ls >> h.kind;
    } else if (key == "shape:") {
      ls >> h.shape[0] >> h.shape[1] >> h.shape[2];
      has_shape = static_cast<bool>(ls);
    } else if (key == "spacing:") {
      ls >> h.spacing[0] >> h.spacing[1] >> h.spacing[2];
      has_spacing = static_cast<bool>(ls);
    } else if (key == "dtype:") {
      ls >> h.dtype;
    } else if (key == "classes:") {
      ls >> h.classes;
    } else {
      throw IoError("unknown raw-grid header key '" + key + "' in " + path.string());
    }
  }
  throw IoError("raw-grid header not terminated: " + path.string());
}

template <typename T>
void read_payload(std::istream& in, Grid3<T>& g, const fs::path& path) {
  auto vals = g.values();
  in.read(reinterpret_cast<char*>(vals.data()), static_cast<std::streamsize>(vals.size_bytes()));
  if (in.gcount() != static_cast<std::streamsize>(vals.size_bytes())) {
    throw IoError("truncated voxel payload in " + path.string());
  }
}

void write_raw_header(std::ostream& out, const std::string& kind, const Shape3& shape,
                      const Spacing3& spacing, const std::string& dtype, int classes) {
  out << "CMADA-RAW 1\n";
  out << "kind: " << kind << "\n";
  out << fmt::format("shape: {} {} {}\n", shape[0], shape[1], shape[2]);
  out << fmt::format("spacing: {:.17g} {:.17g} {:.17g}\n", spacing[0], spacing[1], spacing[2]);
  out << "dtype: " << dtype << "\n";
  if (kind == "label") out << "classes: " << classes << "\n";
  out << "end_header\n";
}

// ------------------------------------------------------------------- NIfTI

constexpr int kNiftiHeaderSize = 348;

enum NiftiType : std::int16_t {
  kUInt8 = 2,
  kInt16 = 4,
  kInt32 = 8,
  kFloat32 = 16,
  kFloat64 = 64,
  kInt8 = 256,
  kUInt16 = 512,
  kUInt32 = 768,
};

struct GzFile {
  gzFile f = nullptr;
  GzFile(const fs::path& p, const char* mode) : f(gzopen(p.string().c_str(), mode)) {}
  ~GzFile() {
    if (f) gzclose(f);
  }
  GzFile(const GzFile&) = delete;
  GzFile& operator=(const GzFile&) = delete;
};

void gz_read_exact(gzFile f, void* dst, std::size_t n, const fs::path& path) {
  auto* p = static_cast<char*>(dst);
  while (n > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
    const int got = gzread(f, p, chunk);
    if (got <= 0) throw IoError("truncated NIfTI file: " + path.string());
    p += got;
    n -= static_cast<std::size_t>(got);
  }
}

template <typename T>
T byteswap_value(T v) {
  std::array<char, sizeof(T)> b;
  std::memcpy(b.data(), &v, sizeof(T));
  std::reverse(b.begin(), b.end());
  std::memcpy(&v, b.data(), sizeof(T));
  return v;
}

template <typename T>
T header_field(const std::array<char, kNiftiHeaderSize>& h, std::size_t offset, bool swap) {
  T v;
  std::memcpy(&v, h.data() + offset, sizeof(T));
  return swap ? byteswap_value(v) : v;
}

struct NiftiImage {
  Shape3 shape{};
  Spacing3 spacing{};
  std::vector<double> values;
};

template <typename T>
void decode_voxels(const std::vector<char>& raw, bool swap, double slope, double inter,
                   std::vector<double>& out) {
  const std::size_t n = raw.size() / sizeof(T);
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    if (swap) v = byteswap_value(v);
    out[i] = static_cast<double>(v) * slope + inter;
  }
}

NiftiImage read_nifti(const fs::path& path) {
  GzFile gz(path, "rb");
  if (!gz.f) throw IoError("cannot open " + path.string());
  std::array<char, kNiftiHeaderSize> h{};
  gz_read_exact(gz.f, h.data(), h.size(), path);

  bool swap = false;
  if (header_field<std::int32_t>(h, 0, false) != kNiftiHeaderSize) {
    if (header_field<std::int32_t>(h, 0, true) != kNiftiHeaderSize) {
      throw IoError("not a NIfTI-1 file: " + path.string());
    }
    swap = true;
  }
  const auto ndim = header_field<std::int16_t>(h, 40, swap);
  if (ndim < 1 || ndim > 7) throw IoError("invalid NIfTI dimensionality in " + path.string());
  NiftiImage img;
  for (int d = 0; d < 3; ++d) {
    const auto n = d < ndim ? header_field<std::int16_t>(h, 42 + 2 * d, swap) : std::int16_t{1};
    img.shape[d] = std::max<std::int64_t>(n, 1);
    const auto sp = header_field<float>(h, 80 + 4 * d, swap);
    img.spacing[d] = d < ndim ? std::fabs(static_cast<double>(sp)) : 1.0;
  }
  for (int d = 3; d < ndim; ++d) {
    if (header_field<std::int16_t>(h, 42 + 2 * d, swap) > 1) {
      throw IoError("only 3D NIfTI volumes are supported: " + path.string());
    }
  }
  const auto datatype = header_field<std::int16_t>(h, 70, swap);
  const auto vox_offset = static_cast<std::int64_t>(header_field<float>(h, 108, swap));
  double slope = header_field<float>(h, 112, swap);
  double inter = header_field<float>(h, 116, swap);
  if (slope == 0.0 || !std::isfinite(slope)) {
    slope = 1.0;
    inter = 0.0;
  }

  std::size_t elem = 0;
  switch (datatype) {
    case kUInt8: case kInt8: elem = 1; break;
    case kInt16: case kUInt16: elem = 2; break;
    case kInt32: case kUInt32: case kFloat32: elem = 4; break;
    case kFloat64: elem = 8; break;
    default: throw IoError("unsupported NIfTI datatype " + std::to_string(datatype));
  }
  if (vox_offset > kNiftiHeaderSize) {
    std::vector<char> skip(static_cast<std::size_t>(vox_offset - kNiftiHeaderSize));
    gz_read_exact(gz.f, skip.data(), skip.size(), path);
  }
  const std::size_t count = static_cast<std::size_t>(img.shape[0] * img.shape[1] * img.shape[2]);
  std::vector<char> raw(count * elem);
  gz_read_exact(gz.f, raw.data(), raw.size(), path);

  switch (datatype) {
    case kUInt8: decode_voxels<std::uint8_t>(raw, swap, slope, inter, img.values); break;
    case kInt8: decode_voxels<std::int8_t>(raw, swap, slope, inter, img.values); break;
    case kInt16: decode_voxels<std::int16_t>(raw, swap, slope, inter, img.values); break;
    case kUInt16: decode_voxels<std::uint16_t>(raw, swap, slope, inter, img.values); break;
    case kInt32: decode_voxels<std::int32_t>(raw, swap, slope, inter, img.values); break;
    case kUInt32: decode_voxels<std::uint32_t>(raw, swap, slope, inter, img.values); break;
    case kFloat32: decode_voxels<float>(raw, swap, slope, inter, img.values); break;
    case kFloat64: decode_voxels<double>(raw, swap, slope, inter, img.values); break;
  }
  return img;
}

template <typename T>
void put(std::array<char, kNiftiHeaderSize + 4>& h, std::size_t offset, T v) {
  std::memcpy(h.data() + offset, &v, sizeof(T));
}

void write_nifti(const fs::path& path, const Shape3& shape, const Spacing3& spacing,
                 std::int16_t datatype, std::int16_t bitpix, const void* data, std::size_t bytes) {
  std::array<char, kNiftiHeaderSize + 4> h{};
  put<std::int32_t>(h, 0, kNiftiHeaderSize);
  put<std::int16_t>(h, 40, 3);
  for (int d = 0; d < 3; ++d) put<std::int16_t>(h, 42 + 2 * d, static_cast<std::int16_t>(shape[d]));
  for (int d = 3; d < 7; ++d) put<std::int16_t>(h, 42 + 2 * d, 1);
  put<std::int16_t>(h, 70, datatype);
  put<std::int16_t>(h, 72, bitpix);
  put<float>(h, 76, 1.0f);
  for (int d = 0; d < 3; ++d) put<float>(h, 80 + 4 * d, static_cast<float>(spacing[d]));
  put<float>(h, 108, 352.0f);
  put<float>(h, 112, 1.0f);
  put<float>(h, 116, 0.0f);
  h[123] = 2;  // mm
  put<std::int16_t>(h, 254, 1);  // sform: scanner, diagonal affine at the origin
  put<float>(h, 280, static_cast<float>(spacing[0]));
  put<float>(h, 296 + 4, static_cast<float>(spacing[1]));
  put<float>(h, 312 + 8, static_cast<float>(spacing[2]));
  std::memcpy(h.data() + 344, "n+1", 4);

  const bool gz = has_suffix(path.filename().string(), ".gz");
  if (gz) {
    GzFile f(path, "wb6");
    if (!f.f) throw IoError("cannot write " + path.string());
    bool ok = gzwrite(f.f, h.data(), static_cast<unsigned>(h.size())) == static_cast<int>(h.size());
    ok = ok && gzwrite(f.f, data, static_cast<unsigned>(bytes)) == static_cast<int>(bytes);
    if (!ok) throw IoError("write failed: " + path.string());
  } else {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(bytes));
    if (!out) throw IoError("write failed: " + path.string());
  }
}

}  // namespace

Volume load_volume(const fs::path& path) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  Volume v;
  if (is_nifti(path)) {
    auto img = read_nifti(path);
    v.data = Grid3<float>(img.shape);
    v.spacing = img.spacing;
    for (std::size_t n = 0; n < img.values.size(); ++n) v.data[n] = static_cast<float>(img.values[n]);
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto h = read_raw_header(in, path);
    if (h.kind != "image" || h.dtype != "float32") {
      throw IoError("expected a float32 image volume in " + path.string());
    }
    v.data = Grid3<float>(h.shape);
    v.spacing = h.spacing;
    read_payload(in, v.data, path);
  }
  v.validate();
  return v;
}

LabelVolume load_label_volume(const fs::path& path, int num_classes) {
  if (!fs::exists(path)) throw IoError("no such file: " + path.string());
  LabelVolume v;
  v.num_classes = num_classes;
  if (is_nifti(path)) {
    auto img = read_nifti(path);
    v.data = Grid3<Label>(img.shape);
    v.spacing = img.spacing;
    for (std::size_t n = 0; n < img.values.size(); ++n) {
      const double x = img.values[n];
      if (x < 0 || x != std::floor(x) || x >= num_classes) {
        throw ValidationError("label value " + std::to_string(x) + " at linear index " +
                              std::to_string(n) + " is not a class index");
      }
      v.data[n] = static_cast<Label>(x);
    }
  } else {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto h = read_raw_header(in, path);
    if (h.kind != "label" || h.dtype != "uint8") {
      throw IoError("expected a uint8 label volume in " + path.string());
    }
    v.data = Grid3<Label>(h.shape);
    v.spacing = h.spacing;
    if (h.classes > 0) v.num_classes = h.classes;
    read_payload(in, v.data, path);
  }
  v.validate();
  return v;
}

void save_volume(const Volume& v, const fs::path& path) {
  validate_spacing(v.spacing);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (is_nifti(path)) {
    for (auto d : v.shape()) {
      if (d > 32767) throw IoError("volume too large for NIfTI-1");
    }
    write_nifti(path, v.shape(), v.spacing, kFloat32, 32, v.data.values().data(),
                v.data.values().size_bytes());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_raw_header(out, "image", v.shape(), v.spacing, "float32", 0);
  out.write(reinterpret_cast<const char*>(v.data.values().data()),
            static_cast<std::streamsize>(v.data.values().size_bytes()));
  if (!out) throw IoError("write failed: " + path.string());
}

void save_label_volume(const LabelVolume& v, const fs::path& path) {
  validate_spacing(v.spacing);
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  if (is_nifti(path)) {
    write_nifti(path, v.shape(), v.spacing, kUInt8, 8, v.data.values().data(),
                v.data.values().size_bytes());
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_raw_header(out, "label", v.shape(), v.spacing, "uint8", v.num_classes);
  out.write(reinterpret_cast<const char*>(v.data.values().data()),
            static_cast<std::streamsize>(v.data.values().size_bytes()));
  if (!out) throw IoError("write failed: " + path.string());
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string domain, id, image, label;
    if (!(ls >> domain)) continue;
    if (!(ls >> id >> image)) {
      throw IoError(fmt::format("{}:{}: expected '<domain> <id> <image> [<label>]'",
                                path.string(), lineno));
    }
    ManifestEntry e{id, base / image, std::nullopt};
    if (ls >> label) e.label = base / label;
    if (domain == "source") {
      if (!e.label) throw IoError(fmt::format("{}:{}: source entries need a label", path.string(), lineno));
      m.source.push_back(std::move(e));
    } else if (domain == "target") {
      m.target.push_back(std::move(e));
    } else {
      throw IoError(fmt::format("{}:{}: unknown domain '{}'", path.string(), lineno, domain));
    }
  }
  return m;
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  auto rel = [&](const fs::path& p) { return p.lexically_relative(base).generic_string(); };
  out << "# domain id image [label]\n";
  for (const auto& e : m.source) out << "source " << e.id << ' ' << rel(e.image) << ' ' << rel(*e.label) << '\n';
  for (const auto& e : m.target) {
    out << "target " << e.id << ' ' << rel(e.image);
    if (e.label) out << ' ' << rel(*e.label);
    out << '\n';
  }
}

}  // namespace cmada
