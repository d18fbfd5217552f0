#include "rrl/synth/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"

namespace rrl {

void Dataset::validate() const {
  const std::size_t n = images.size();
  require(ids.size() == n && subjects.size() == n && landmarks.size() == n &&
              static_cast<std::size_t>(labels.rows()) == n,
          "dataset: images, ids, subjects, landmarks and labels must have one entry per sample");
  require((labels.array() == 0 || labels.array() == 1).all(), "dataset: labels must be binary");
  for (const Image& img : images) {
    require(img.size() > 0 && img.minCoeff() >= 0.0 && img.maxCoeff() <= 1.0, "dataset: pixels must lie in [0, 1]");
  }
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
  Dataset out;
  out.labels.resize(static_cast<Eigen::Index>(rows.size()), labels.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    require(r < size(), "dataset subset: row out of range");
    out.ids.push_back(ids[r]);
    out.subjects.push_back(subjects[r]);
    out.images.push_back(images[r]);
    out.landmarks.push_back(landmarks[r]);
    out.labels.row(static_cast<Eigen::Index>(i)) = labels.row(static_cast<Eigen::Index>(r));
  }
  return out;
}

Image quantize(const Image& image) {
  return image.unaryExpr([](double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; });
}

Image read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  auto token = [&]() {
    std::string t;
    while (in >> std::ws && in.peek() == '#') {
      std::string comment;
      std::getline(in, comment);
    }
    in >> t;
    return t;
  };
  require(token() == "P5", path.string() + ": not a binary PGM (P5)");
  const long long width = io::parse_int(token()), height = io::parse_int(token()), maxval = io::parse_int(token());
  require(width > 0 && height > 0 && maxval == 255, path.string() + ": only 8-bit PGM images are supported");
  in.get();  // single whitespace byte before the raster
  std::string raster(static_cast<std::size_t>(width * height), '\0');
  in.read(raster.data(), static_cast<std::streamsize>(raster.size()));
  if (in.gcount() != static_cast<std::streamsize>(raster.size())) throw IoError(path.string() + ": truncated raster");
  Image img(height, width);
  for (long long r = 0; r < height; ++r) {
    for (long long c = 0; c < width; ++c) {
      img(r, c) = static_cast<unsigned char>(raster[static_cast<std::size_t>(r * width + c)]) / 255.0;
    }
  }
  return img;
}

void write_pgm(const std::filesystem::path& path, const Image& image) {
  std::string out = "P5\n" + std::to_string(image.cols()) + " " + std::to_string(image.rows()) + "\n255\n";
  for (Eigen::Index r = 0; r < image.rows(); ++r) {
    for (Eigen::Index c = 0; c < image.cols(); ++c) {
      out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(image(r, c), 0.0, 1.0) * 255.0))));
    }
  }
  io::write_file_atomic(path, out);
}

std::string sample_id(int subject, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%03d_%04d", subject, index);
  return buf;
}

int subject_of(const std::string& id) {
  require(id.size() > 1 && id[0] == 's' && id.find('_') != std::string::npos, "sample id '" + id + "' is not s<subject>_<index>");
  return static_cast<int>(io::parse_int(id.substr(1, id.find('_') - 1)));
}

LabelMatrix read_labels_csv(const std::filesystem::path& path, std::vector<std::string>* ids) {
  const io::CsvTable table = io::read_csv(path);
  require(!table.header.empty() && table.header[0] == "image_id", path.string() + ": first column must be image_id");
  const auto K = static_cast<Eigen::Index>(table.header.size() - 1);
  require(K >= 1, path.string() + ": no AU columns");
  LabelMatrix labels(static_cast<Eigen::Index>(table.rows.size()), K);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    if (ids) ids->push_back(table.rows[r][0]);
    for (Eigen::Index k = 0; k < K; ++k) {
      const long long v = io::parse_int(table.rows[r][static_cast<std::size_t>(k + 1)]);
      require(v == 0 || v == 1, path.string() + ": labels must be 0 or 1");
      labels(static_cast<Eigen::Index>(r), k) = static_cast<int>(v);
    }
  }
  return labels;
}

void write_labels_csv(const std::filesystem::path& path, const std::vector<std::string>& ids, const LabelMatrix& labels) {
  require(static_cast<Eigen::Index>(ids.size()) == labels.rows(), "write_labels_csv: one id per label row");
  io::CsvTable table;
  table.header.push_back("image_id");
  for (Eigen::Index k = 0; k < labels.cols(); ++k) table.header.push_back("au_" + std::to_string(k));
  for (std::size_t r = 0; r < ids.size(); ++r) {
    std::vector<std::string> row{ids[r]};
    for (Eigen::Index k = 0; k < labels.cols(); ++k) {
      row.push_back(std::to_string(labels(static_cast<Eigen::Index>(r), k)));
    }
    table.rows.push_back(std::move(row));
  }
  io::write_csv(path, table);
}

void write_dataset(const std::filesystem::path& dir, const Dataset& dataset) {
  dataset.validate();
  std::filesystem::create_directories(dir / "images");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    write_pgm(dir / "images" / (dataset.ids[i] + ".pgm"), dataset.images[i]);
  }
  write_labels_csv(dir / "labels.csv", dataset.ids, dataset.labels);
  write_landmarks_csv(dir / "landmarks.csv", dataset.landmarks);
}

Dataset read_dataset(const std::filesystem::path& dir) {
  Dataset d;
  d.labels = read_labels_csv(dir / "labels.csv", &d.ids);
  d.landmarks = read_landmarks_csv(dir / "landmarks.csv");
  require(d.landmarks.size() == d.ids.size(), (dir / "landmarks.csv").string() + ": row count differs from labels.csv");
  for (const std::string& id : d.ids) {
    d.subjects.push_back(subject_of(id));
    d.images.push_back(read_pgm(dir / "images" / (id + ".pgm")));
  }
  d.validate();
  return d;
}

}  // namespace rrl
