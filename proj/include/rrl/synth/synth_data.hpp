#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rrl/attention/attention_maps.hpp"
#include "rrl/pipeline/config.hpp"
#include "rrl/synth/dataset.hpp"

namespace rrl {

// With probability `strength`, label j copies label i (or, when exclusive, is
// switched off whenever i is on); otherwise j keeps its own independent draw.
struct Coupling {
  int i = 0;
  int j = 0;
  double strength = 0.0;
  bool exclusive = false;
};

// "i-j:s" for copies and "i!j:s" for exclusions, separated by ';'.
std::vector<Coupling> parse_couplings(const std::string& text);
std::string format_couplings(const std::vector<Coupling>& couplings);

struct SynthSpec {
  int K = 8;
  int image_size = 56;
  int n_subjects = 8;
  int per_subject = 60;
  int first_subject = 0;
  // Landmark-anchored AU sites: the centroid of each region's points.
  std::vector<AuRegionSpec> regions;
  std::vector<double> au_prior;
  std::vector<Coupling> couplings;
  std::uint64_t seed = 0;
  double au_amplitude = 0.25;
  double au_radius = 0.05;      // Gaussian envelope sigma, normalized units
  double au_wavelength = 0.16;  // carrier period, normalized units
  double pixel_noise = 0.01;
  // Scales per-subject geometry, tone and texture; 0 gives identical faces.
  double subject_variation = 1.0;

  void validate() const;
};

// Defaults for K = 8: uniform priors of 0.3 and the region layout of
// default_au_regions(8), with brows, eyes and mouth corners coupled.
SynthSpec default_synth_spec(int K = 8);

/// Regions for K = 8 (brows, eyes, nose, mouth corners, chin) or K = 12
/// (adds upper lip, lower lip and both cheeks).
std::vector<AuRegionSpec> default_au_regions(int K);

// Couplings are applied in order. Targets must be distinct and never act as a
// source, so every source keeps its prior as marginal.
LabelMatrix sample_labels(const SynthSpec& spec, std::size_t n, Rng& rng);

// Expected Dice between AUs a and b under the coupling model of `spec`.
double planted_dice(const SynthSpec& spec, int a, int b);

/// Mean face layout in normalized coordinates (jaw 0-16, brows 17-26, nose
/// 27-35, eyes 36-47, lips 48-67).
LandmarkSet landmark_template();

/// Per-subject geometry and texture.
struct SubjectProfile {
  int id = 0;
  Eigen::Matrix2d warp = Eigen::Matrix2d::Identity();  // about the face center
  Eigen::Vector2d shift = Eigen::Vector2d::Zero();
  LandmarkSet landmarks;
  double tone = 0.0;
  Eigen::Matrix<double, 3, 4> texture = Eigen::Matrix<double, 3, 4>::Zero();  // (amp, fx, fy, phase) per row
};

SubjectProfile make_subject(const SynthSpec& spec, int subject);

// Centers of the AU patterns for a given landmark set.
std::vector<Eigen::Vector2d> au_sites(const SynthSpec& spec, const LandmarkSet& landmarks);

/// Subject base pattern plus one truncated Gabor patch (support radius
/// 3 * au_radius) per active AU, with pixel noise drawn from noise_seed.
/// Returned unquantized and clamped to [0, 1].
Image render_face(const SynthSpec& spec, const SubjectProfile& subject, const LandmarkSet& landmarks,
                  const Eigen::VectorXi& active, std::uint64_t noise_seed);

/// Subjects first_subject .. first_subject + n_subjects - 1, per_subject
/// images each. Pixels are quantized to 8 bits so a PGM round trip is exact.
Dataset generate(const SynthSpec& spec);

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

// Subject-disjoint shards: train subjects come first, test subjects follow.
DatasetSplit generate_split(const SynthSpec& spec, int train_subjects, int test_subjects);

/// Settings of the gen-data command. resolve() fills regions, priors and
/// couplings for the chosen K.
struct GenDataConfig {
  int K = 8;
  int train_subjects = 8;
  int test_subjects = 4;
  int per_subject = 60;
  std::uint64_t seed = 0;
  double prior = 0.3;
  std::string couplings = "default";
  double au_amplitude = 0.25;
  double au_radius = 0.05;
  double au_wavelength = 0.16;
  double pixel_noise = 0.01;
  double subject_variation = 1.0;

  SynthSpec resolve() const;
};

const OptionTable<GenDataConfig>& gen_data_options();

}  // namespace rrl
