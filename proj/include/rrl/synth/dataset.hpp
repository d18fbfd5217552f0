#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rrl/attention/attention_maps.hpp"
#include "rrl/model/encoder.hpp"
#include "rrl/relation/relation.hpp"

namespace rrl {

/// Grayscale images in [0, 1] with their landmarks and binary AU labels.
struct Dataset {
  std::vector<std::string> ids;
  std::vector<int> subjects;
  std::vector<Image> images;
  std::vector<LandmarkSet> landmarks;
  LabelMatrix labels;  // N x K

  std::size_t size() const { return images.size(); }
  int K() const { return static_cast<int>(labels.cols()); }
  void validate() const;
  Dataset subset(const std::vector<std::size_t>& rows) const;
};

// 8-bit binary PGM (P5); pixel values map to v / 255.
Image read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Image& image);
// Rounds to the nearest of the 256 levels a PGM can store.
Image quantize(const Image& image);

// Ids look like s<subject>_<index>.
std::string sample_id(int subject, int index);
int subject_of(const std::string& id);

/// Layout: <dir>/images/<id>.pgm, <dir>/labels.csv (image_id, au_0..),
/// <dir>/landmarks.csv (x0, y0, ..., x67, y67 in labels.csv row order).
void write_dataset(const std::filesystem::path& dir, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& dir);

LabelMatrix read_labels_csv(const std::filesystem::path& path, std::vector<std::string>* ids = nullptr);
void write_labels_csv(const std::filesystem::path& path, const std::vector<std::string>& ids, const LabelMatrix& labels);

}  // namespace rrl
