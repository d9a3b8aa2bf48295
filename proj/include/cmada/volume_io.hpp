#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmada/volume.hpp"

namespace cmada {

// Two on-disk formats are supported:
//  * NIfTI-1 single file (.nii, .nii.gz), read for any common scalar dtype.
//  * The native raw-grid format (.cvol): a plain-text header followed by a
//    little-endian scalar payload.
//
//      CMADA-RAW 1
//      kind: image | label
//      shape: nx ny nz
//      spacing: sx sy sz
//      dtype: float32 | uint8
//      classes: C              (label files only)
//      end_header
//      <nx*ny*nz scalars, x fastest>

Volume load_volume(const std::filesystem::path& path);
LabelVolume load_label_volume(const std::filesystem::path& path,
                              int num_classes = kDefaultClassCount);

/// Format chosen from the extension (.nii / .nii.gz / anything else -> raw).
void save_volume(const Volume& v, const std::filesystem::path& path);
void save_label_volume(const LabelVolume& v, const std::filesystem::path& path);

struct ManifestEntry {
  std::string id;
  std::filesystem::path image;
  std::optional<std::filesystem::path> label;
};

/// Dataset manifest: one line per volume, `<domain> <id> <image> [<label>]`,
/// paths relative to the manifest directory; '#' starts a comment. For the
/// target domain the label column is evaluation-only ground truth.
struct DatasetManifest {
  std::vector<ManifestEntry> source;
  std::vector<ManifestEntry> target;
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

}  // namespace cmada
