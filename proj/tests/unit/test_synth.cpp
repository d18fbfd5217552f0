#include <doctest.h>

#include <filesystem>
#include <set>

#include "rrl/error.hpp"
#include "rrl/relation/relation.hpp"
#include "rrl/synth/synth_data.hpp"

using namespace rrl;

namespace {

SynthSpec small_spec() {
  SynthSpec spec = default_synth_spec(8);
  spec.n_subjects = 2;
  spec.per_subject = 5;
  spec.seed = 11;
  return spec;
}

}  // namespace

TEST_CASE("zero priors give no labels and a bare face") {
  SynthSpec spec = small_spec();
  spec.au_prior.assign(8, 0.0);
  spec.couplings.clear();
  spec.pixel_noise = 0.0;
  const Dataset d = generate(spec);
  CHECK(d.labels.isZero());
  const SubjectProfile s = make_subject(spec, 0);
  const Image bare = quantize(render_face(spec, s, s.landmarks, Eigen::VectorXi::Zero(8), 0));
  CHECK(d.images[0] == bare);
  CHECK(d.images[1] == bare);
}

TEST_CASE("couplings of strength one copy or exclude exactly") {
  SynthSpec spec = small_spec();
  spec.couplings = parse_couplings("0-1:1;2!3:1");
  Rng rng(1);
  const LabelMatrix y = sample_labels(spec, 500, rng);
  CHECK(y.col(0) == y.col(1));
  CHECK((y.col(2).array() * y.col(3).array()).sum() == 0);
  const RelationMatrix r = relation_from_labels(y);
  CHECK(r.m(0, 1) == 1.0);
  CHECK(r.m(2, 3) == 0.0);
  CHECK(planted_dice(spec, 0, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(planted_dice(spec, 2, 3) == 0.0);
}

TEST_CASE("planted coupling is recovered from 2000 samples") {
  SynthSpec spec = small_spec();
  spec.couplings = parse_couplings("0-1:0.6");
  Rng rng(2);
  const LabelMatrix y = sample_labels(spec, 2000, rng);
  const double target = planted_dice(spec, 0, 1);
  CHECK(std::abs(relation_from_labels(y).m(0, 1) - target) <= 0.05);
  // Marginals of sources stay at the prior.
  CHECK(std::abs(y.col(0).cast<double>().mean() - 0.3) < 0.05);
}

TEST_CASE("an active AU only changes pixels near its site") {
  SynthSpec spec = small_spec();
  spec.pixel_noise = 0.0;
  const SubjectProfile s = make_subject(spec, 0);
  const auto sites = au_sites(spec, s.landmarks);
  Eigen::VectorXi on = Eigen::VectorXi::Zero(8);
  const Image base = render_face(spec, s, s.landmarks, on, 0);
  on[4] = 1;
  const Image with = render_face(spec, s, s.landmarks, on, 0);
  const double n = spec.image_size;
  double changed = 0.0;
  for (int r = 0; r < spec.image_size; ++r) {
    for (int c = 0; c < spec.image_size; ++c) {
      const Eigen::Vector2d p((c + 0.5) / n, (r + 0.5) / n);
      const double diff = std::abs(with(r, c) - base(r, c));
      if ((p - sites[4]).norm() > 3.0 * spec.au_radius + 1.0 / n) CHECK(diff == 0.0);
      changed += diff;
    }
  }
  CHECK(changed > 0.0);
}

TEST_CASE("generation is deterministic and seed dependent") {
  const SynthSpec spec = small_spec();
  const Dataset a = generate(spec), b = generate(spec);
  CHECK(a.labels == b.labels);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.images[i] == b.images[i]);
  SynthSpec other = spec;
  other.seed = 12;
  CHECK(generate(other).images[0] != a.images[0]);
}

TEST_CASE("subject variation") {
  SynthSpec spec = small_spec();
  const SubjectProfile s0 = make_subject(spec, 0), s1 = make_subject(spec, 1);
  CHECK(s0.landmarks.points != s1.landmarks.points);
  spec.subject_variation = 0.0;
  const SubjectProfile z0 = make_subject(spec, 0), z1 = make_subject(spec, 1);
  CHECK(z0.landmarks.points == z1.landmarks.points);
  CHECK((z0.landmarks.points - landmark_template().points).cwiseAbs().maxCoeff() < 1e-15);
  CHECK(z0.tone == 0.0);
  spec.subject_variation = -0.5;
  CHECK_THROWS_AS(spec.validate(), ContractError);
}

TEST_CASE("train and test shards share no subject") {
  SynthSpec spec = small_spec();
  spec.per_subject = 3;
  const DatasetSplit split = generate_split(spec, 3, 2);
  CHECK(split.train.size() == 9);
  CHECK(split.test.size() == 6);
  const std::set<int> tr(split.train.subjects.begin(), split.train.subjects.end());
  for (int s : split.test.subjects) CHECK_FALSE(tr.count(s));
  for (std::size_t i = 0; i < split.test.size(); ++i) CHECK(subject_of(split.test.ids[i]) == split.test.subjects[i]);
}

TEST_CASE("dataset and PGM round trips are exact") {
  const auto dir = std::filesystem::temp_directory_path() / "rrl_synth_test";
  std::filesystem::remove_all(dir);
  const Dataset d = generate(small_spec());
  write_dataset(dir, d);
  const Dataset back = read_dataset(dir);
  CHECK(back.ids == d.ids);
  CHECK(back.subjects == d.subjects);
  CHECK(back.labels == d.labels);
  for (std::size_t i = 0; i < d.size(); ++i) {
    CHECK(back.images[i] == d.images[i]);
    CHECK(back.landmarks[i].points.isApprox(d.landmarks[i].points, 1e-12));
  }
  std::filesystem::remove_all(dir);
  CHECK_THROWS_AS(read_dataset(dir), IoError);
  CHECK_THROWS_AS(read_pgm(dir / "missing.pgm"), IoError);
}

TEST_CASE("coupling text format") {
  const auto c = parse_couplings("0-1:0.8;2!5:0.25");
  REQUIRE(c.size() == 2);
  CHECK(c[1].i == 2);
  CHECK(c[1].j == 5);
  CHECK(c[1].exclusive);
  CHECK(c[1].strength == 0.25);
  CHECK(parse_couplings(format_couplings(c)).size() == 2);
  CHECK(format_couplings(parse_couplings(format_couplings(c))) == format_couplings(c));
  CHECK(parse_couplings("").empty());
  CHECK_THROWS_AS(parse_couplings("0+1:0.5"), ContractError);
}
