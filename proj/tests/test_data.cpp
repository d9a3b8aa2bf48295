#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <set>

#include <zlib.h>

#include "cmada/phantom.hpp"
#include "cmada/preprocess.hpp"
#include "cmada/rng.hpp"
#include "cmada/slices.hpp"
#include "cmada/volume_io.hpp"

using namespace cmada;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("cmada_test_data_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Volume ramp(Shape3 s, Spacing3 sp) {
  Volume v{Grid3<float>(s), sp};
  for (std::int64_t k = 0; k < s[2]; ++k)
    for (std::int64_t j = 0; j < s[1]; ++j)
      for (std::int64_t i = 0; i < s[0]; ++i) v.data(i, j, k) = static_cast<float>(i + 10 * j + 100 * k);
  return v;
}

// Minimal NIfTI-1 header writer, independent of the library writer.
void write_nifti_int16(const fs::path& path, Shape3 s, Spacing3 sp, const std::vector<std::int16_t>& vals,
                       float slope, float inter, bool gz) {
  std::vector<char> hdr(352, 0);
  auto put_i32 = [&](int off, std::int32_t x) { std::memcpy(&hdr[off], &x, 4); };
  auto put_i16 = [&](int off, std::int16_t x) { std::memcpy(&hdr[off], &x, 2); };
  auto put_f32 = [&](int off, float x) { std::memcpy(&hdr[off], &x, 4); };
  put_i32(0, 348);
  put_i16(40, 3);
  for (int d = 0; d < 3; ++d) put_i16(42 + 2 * d, static_cast<std::int16_t>(s[d]));
  for (int d = 3; d < 7; ++d) put_i16(42 + 2 * d, 1);
  put_i16(70, 4);
  put_i16(72, 16);
  put_f32(76, 1.0f);
  for (int d = 0; d < 3; ++d) put_f32(80 + 4 * d, static_cast<float>(sp[d]));
  put_f32(108, 352.0f);
  put_f32(112, slope);
  put_f32(116, inter);
  std::memcpy(&hdr[344], "n+1\0", 4);
  std::string bytes(hdr.begin(), hdr.end());
  bytes.append(reinterpret_cast<const char*>(vals.data()), vals.size() * 2);
  if (gz) {
    gzFile f = gzopen(path.c_str(), "wb");
    gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
    gzclose(f);
  } else {
    std::ofstream(path, std::ios::binary) << bytes;
  }
}

}  // namespace

TEST_CASE("raw volume round trip is exact") {
  const auto dir = scratch("raw");
  auto v = ramp({5, 4, 3}, {0.468, 0.468, 1.5});
  v.data(1, 2, 0) = -3.25e-7f;
  save_volume(v, dir / "a.cvol");
  CHECK(load_volume(dir / "a.cvol") == v);

  LabelVolume l{Grid3<Label>({5, 4, 3}), {1, 2, 3}, 3};
  l.data(2, 2, 2) = 2;
  l.data(0, 1, 0) = 1;
  save_label_volume(l, dir / "l.cvol");
  CHECK(load_label_volume(dir / "l.cvol") == l);
}

TEST_CASE("NIfTI round trip for images and labels, plain and gzipped") {
  const auto dir = scratch("nii");
  const auto v = ramp({6, 5, 4}, {0.5, 0.75, 2.0});
  for (const auto* name : {"a.nii", "a.nii.gz"}) {
    save_volume(v, dir / name);
    const auto r = load_volume(dir / name);
    CHECK(r == v);
  }
  LabelVolume l{Grid3<Label>({6, 5, 4}), {0.5, 0.75, 2.0}, 3};
  l.data(3, 3, 3) = 2;
  save_label_volume(l, dir / "l.nii.gz");
  CHECK(load_label_volume(dir / "l.nii.gz") == l);
}

TEST_CASE("NIfTI int16 with scaling is read through an independent header") {
  const auto dir = scratch("nii16");
  std::vector<std::int16_t> vals(4 * 3 * 2);
  for (std::size_t n = 0; n < vals.size(); ++n) vals[n] = static_cast<std::int16_t>(n) - 5;
  for (bool gz : {false, true}) {
    const auto path = dir / (gz ? "x.nii.gz" : "x.nii");
    write_nifti_int16(path, {4, 3, 2}, {0.9, 0.8, 3.0}, vals, 2.0f, 1.0f, gz);
    const auto v = load_volume(path);
    REQUIRE(v.shape() == Shape3{4, 3, 2});
    CHECK(v.spacing[0] == doctest::Approx(0.9));
    CHECK(v.spacing[2] == doctest::Approx(3.0));
    for (std::size_t n = 0; n < vals.size(); ++n) CHECK(v.data[static_cast<std::int64_t>(n)] == 2.0f * vals[n] + 1.0f);
  }
}

TEST_CASE("corrupt and missing files raise IoError") {
  const auto dir = scratch("bad");
  CHECK_THROWS_AS(load_volume(dir / "missing.cvol"), IoError);
  std::ofstream(dir / "junk.cvol") << "hello";
  CHECK_THROWS_AS(load_volume(dir / "junk.cvol"), IoError);
  save_volume(ramp({4, 4, 4}, {1, 1, 1}), dir / "t.cvol");
  fs::resize_file(dir / "t.cvol", fs::file_size(dir / "t.cvol") - 7);
  CHECK_THROWS_AS(load_volume(dir / "t.cvol"), IoError);
  std::ofstream(dir / "junk.nii", std::ios::binary) << std::string(400, 'x');
  CHECK_THROWS_AS(load_volume(dir / "junk.nii"), IoError);
}

TEST_CASE("non-finite voxels and bad labels are rejected") {
  const auto dir = scratch("nonfinite");
  auto v = ramp({3, 3, 3}, {1, 1, 1});
  v.data(1, 1, 1) = std::nanf("");
  CHECK_THROWS_AS(v.validate(), ValidationError);
  LabelVolume l{Grid3<Label>({3, 3, 3}), {1, 1, 1}, 3};
  l.data(0, 0, 0) = 7;
  CHECK_THROWS_AS(l.validate(), ValidationError);
  CHECK_THROWS_AS(validate_spacing({1.0, 0.0, 1.0}), ValidationError);
}

TEST_CASE("manifest round trip keeps relative paths") {
  const auto dir = scratch("manifest");
  DatasetManifest m;
  m.source.push_back({"s1", dir / "s" / "a.cvol", dir / "s" / "a_l.cvol"});
  m.target.push_back({"t1", dir / "t" / "b.cvol", std::nullopt});
  save_manifest(m, dir / "m.txt");
  const auto r = load_manifest(dir / "m.txt");
  REQUIRE(r.source.size() == 1);
  REQUIRE(r.target.size() == 1);
  CHECK(fs::path(r.source[0].image).lexically_normal().parent_path() == (dir / "s").lexically_normal());
  CHECK(r.source[0].id == "s1");
  CHECK_FALSE(r.target[0].label.has_value());
  std::ofstream(dir / "bad.txt") << "source only_id\n";
  CHECK_THROWS_AS(load_manifest(dir / "bad.txt"), IoError);
  std::ofstream(dir / "nolabel.txt") << "source s a.cvol\n";
  CHECK_THROWS_AS(load_manifest(dir / "nolabel.txt"), IoError);
}

TEST_CASE("resample to the same spacing is the identity") {
  const auto v = ramp({4, 5, 6}, {0.5, 0.5, 2.0});
  CHECK(resample(v, v.spacing) == v);
}

TEST_CASE("trilinear resample of a linear ramp is exact on interior samples") {
  const auto v = ramp({8, 8, 4}, {1.0, 1.0, 2.0});
  const auto r = resample(v, {0.5, 0.5, 1.0});
  CHECK(r.shape() == Shape3{16, 16, 8});
  for (std::int64_t k = 0; k < 7; ++k)
    for (std::int64_t j = 0; j < 15; ++j)
      for (std::int64_t i = 0; i < 15; ++i)
        CHECK(r.data(i, j, k) == doctest::Approx(0.5 * i + 10 * 0.5 * j + 100 * 0.5 * k));
}

TEST_CASE("nearest resample of labels only produces existing labels") {
  LabelVolume l{Grid3<Label>({6, 6, 3}), {1, 1, 3}, 3};
  l.data(2, 2, 1) = 1;
  l.data(3, 3, 1) = 2;
  const auto r = resample(l, {0.7, 0.7, 1.1});
  std::set<int> seen;
  for (auto x : r.data.values()) seen.insert(x);
  CHECK(seen == std::set<int>{0, 1, 2});
}

TEST_CASE("conform_shape crops centrally and pads symmetrically") {
  const auto v = ramp({6, 4, 2}, {1, 1, 1});
  const auto c = conform_shape(v, {4, 6, 2}, -1.0f);
  CHECK(c.shape() == Shape3{4, 6, 2});
  CHECK(c.data(0, 0, 0) == -1.0f);
  CHECK(c.data(0, 1, 0) == v.data(1, 0, 0));
  CHECK(c.data(3, 4, 1) == v.data(4, 3, 1));
  CHECK(c.data(0, 5, 0) == -1.0f);
}

TEST_CASE("clipping stays inside mean +- 3 sd of a two-pass oracle") {
  Rng rng(5);
  Volume v{Grid3<float>({10, 10, 10}), {1, 1, 1}};
  for (auto& x : v.data.values()) x = static_cast<float>(rng.normal());
  v.data(0, 0, 0) = 50.0f;
  v.data(1, 0, 0) = -40.0f;
  long double sum = 0;
  for (float x : v.data.values()) sum += x;
  const long double mean = sum / v.data.size();
  long double ss = 0;
  for (float x : v.data.values()) ss += (x - mean) * (x - mean);
  const long double sd = std::sqrt(ss / v.data.size());
  const auto c = clip_intensities(v);
  for (std::int64_t n = 0; n < v.data.size(); ++n) {
    CHECK(c.data[n] >= mean - 3 * sd - 1e-12L);
    CHECK(c.data[n] <= mean + 3 * sd + 1e-12L);
    if (v.data[n] > mean - 3 * sd && v.data[n] < mean + 3 * sd) CHECK(c.data[n] == v.data[n]);
  }
  CHECK(c.data(0, 0, 0) < 50.0f);
}

TEST_CASE("normalize maps onto [-1, 1] and a constant volume to 0") {
  const auto n = normalize(ramp({3, 3, 3}, {1, 1, 1}));
  const auto vals = n.data.values();
  CHECK(*std::min_element(vals.begin(), vals.end()) == -1.0f);
  CHECK(*std::max_element(vals.begin(), vals.end()) == doctest::Approx(1.0f));
  Volume flat{Grid3<float>({2, 2, 2}, 4.0f), {1, 1, 1}};
  const auto nf = normalize(flat);
  for (auto x : nf.data.values()) CHECK(x == 0.0f);
}

TEST_CASE("preprocess produces the configured grid") {
  const auto v = ramp({20, 18, 5}, {1.0, 1.0, 3.0});
  const PreprocessConfig cfg{{0.5, 0.5, 1.5}, {32, 32, 12}, true};
  const auto p = preprocess(v, cfg);
  CHECK(p.shape() == cfg.shape);
  CHECK(p.spacing == cfg.spacing);
  for (auto x : p.data.values()) {
    CHECK(x >= -1.0f);
    CHECK(x <= 1.0f);
  }
}

TEST_CASE("phantoms are deterministic and labels stay in range") {
  PhantomSpec spec;
  spec.volumes_per_domain = 2;
  spec.seed = 11;
  const auto a = make_phantom_dataset(spec);
  const auto b = make_phantom_dataset(spec);
  REQUIRE(a.source.size() == 2);
  REQUIRE(a.target.size() == 2);
  CHECK(a.source[0].image == b.source[0].image);
  CHECK(a.target[1].label == b.target[1].label);
  for (const auto& v : a.source) {
    std::array<int, 3> counts{};
    for (auto x : v.label.data.values()) {
      REQUIRE(x < 3);
      ++counts[x];
    }
    CHECK(counts[1] > 0);
    CHECK(counts[2] > 0);
  }
  spec.seed = 12;
  CHECK_FALSE(make_phantom_dataset(spec).source[0].image == a.source[0].image);
}

TEST_CASE("phantom domains differ in appearance, not anatomy distribution") {
  PhantomSpec spec;
  spec.volumes_per_domain = 3;
  const auto d = make_phantom_dataset(spec);
  auto class_mean = [](const std::vector<LabeledVolume>& vols, int cls) {
    double s = 0;
    long n = 0;
    for (const auto& v : vols)
      for (std::int64_t i = 0; i < v.image.data.size(); ++i) {
        if (v.label.data[i] == cls && (cls != 0 || v.image.data[i] > 0.2f)) {
          s += v.image.data[i];
          ++n;
        }
      }
    return s / static_cast<double>(n);
  };
  std::array<double, 3> src{}, tgt{};
  for (int c = 0; c < 3; ++c) {
    src[c] = class_mean(d.source, c);
    tgt[c] = class_mean(d.target, c);
  }
  CHECK(std::abs(src[1] - spec.source.class_intensity(1)) < 0.02);
  CHECK(std::abs(tgt[1] - spec.target.class_intensity(1)) < 0.03);
  // contrast inversion reverses the rank order of the class means
  CHECK(src[0] < src[2]);
  CHECK(src[2] < src[1]);
  CHECK(tgt[1] < tgt[2]);
  CHECK(tgt[2] < tgt[0]);
}

TEST_CASE("noise-free phantoms render foreground at the configured means") {
  PhantomSpec spec;
  spec.volumes_per_domain = 1;
  spec.source.noise = spec.target.noise = 0.0;
  spec.source.bias_amplitude = spec.target.bias_amplitude = 0.0;
  const auto d = make_phantom_dataset(spec);
  for (const auto* side : {&d.source, &d.target}) {
    const auto& app = side == &d.source ? spec.source : spec.target;
    const auto& v = side->front();
    for (std::int64_t i = 0; i < v.image.data.size(); ++i) {
      const int c = v.label.data[i];
      if (c > 0) CHECK(v.image.data[i] == static_cast<float>(app.class_intensity(c)));
    }
  }
}

TEST_CASE("anatomy statistics agree across domains") {
  PhantomSpec spec;
  spec.volumes_per_domain = 60;
  const auto d = make_phantom_dataset(spec);
  for (int c = 1; c < 3; ++c) {
    double s = 0, t = 0;
    for (const auto& v : d.source)
      for (auto x : v.label.data.values()) s += x == c;
    for (const auto& v : d.target)
      for (auto x : v.label.data.values()) t += x == c;
    CHECK(std::abs(s - t) / s < 0.15);
  }
}

TEST_CASE("a phantom that cannot fit is a validation error") {
  PhantomSpec spec;
  spec.shape = {8, 8, 2};
  CHECK_THROWS_AS(spec.validate(), ValidationError);
}

TEST_CASE("slices come out ordered and batches cover each epoch once") {
  const auto a = ramp({4, 3, 5}, {1, 1, 1});
  const auto b = ramp({4, 3, 2}, {1, 1, 1});
  std::vector<VolumeRef> refs{{"b", &b, nullptr, Domain::target}, {"a", &a, nullptr, Domain::target}};
  const auto slices = slice_volumes(refs);
  REQUIRE(slices.size() == 7);
  CHECK(slices[0].volume_id == "a");
  CHECK(slices[4].slice_index == 4);
  CHECK(slices[5].volume_id == "b");
  CHECK(slices[0].image.rows == 3);
  CHECK(slices[0].image.cols == 4);
  CHECK(slices[1].image(2, 3) == a.data(3, 2, 1));

  SliceIterator it(slices, 3, 42);
  CHECK(it.batches_per_epoch() == 3);
  std::multiset<const SliceSample*> seen;
  while (auto batch = it.next_in_epoch()) {
    for (auto* s : *batch) seen.insert(s);
  }
  CHECK(seen.size() == 7);
  CHECK(std::set<const SliceSample*>(seen.begin(), seen.end()).size() == 7);

  SliceIterator x(slices, 2, 9), y(slices, 2, 9);
  for (int n = 0; n < 10; ++n) CHECK(x.next() == y.next());
}

TEST_CASE("insert_slice inverts extract_slice") {
  const auto v = ramp({4, 3, 5}, {1, 1, 1});
  Grid3<float> g({4, 3, 5});
  for (std::int64_t k = 0; k < 5; ++k) insert_slice(g, kAxialAxis, k, extract_slice(v, kAxialAxis, k));
  CHECK(g == v.data);
}
