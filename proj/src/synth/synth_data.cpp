#include "rrl/synth/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

#include "rrl/error.hpp"
#include "rrl/io/csv.hpp"

namespace rrl {
namespace {

constexpr double kPi = std::numbers::pi;
const Eigen::Vector2d kFaceCenter(0.5, 0.52);

void place_arc(LandmarkSet& l, int first, int count, Eigen::Vector2d from, Eigen::Vector2d to, double bulge) {
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.5 : static_cast<double>(i) / (count - 1);
    const Eigen::Vector2d p = from + t * (to - from);
    l.points(first + i, 0) = p.x();
    l.points(first + i, 1) = p.y() - bulge * std::sin(kPi * t);
  }
}

void place_ring(LandmarkSet& l, int first, int count, Eigen::Vector2d center, double rx, double ry) {
  for (int i = 0; i < count; ++i) {
    const double a = kPi - 2.0 * kPi * i / count;  // start at the left corner, go over the top
    l.points(first + i, 0) = center.x() + rx * std::cos(a);
    l.points(first + i, 1) = center.y() - ry * std::sin(a);
  }
}

double blob(const Eigen::Vector2d& q, double cx, double cy, double sx, double sy) {
  const double dx = (q.x() - cx) / sx, dy = (q.y() - cy) / sy;
  return std::exp(-0.5 * (dx * dx + dy * dy));
}

// Shading of the mean face, evaluated in template coordinates.
double template_face(const Eigen::Vector2d& q) {
  const double rho = std::hypot((q.x() - kFaceCenter.x()) / 0.37, (q.y() - kFaceCenter.y()) / 0.46);
  double v = 0.2 + 0.35 / (1.0 + std::exp((rho - 1.0) / 0.04));
  v -= 0.25 * (blob(q, 0.33, 0.40, 0.045, 0.02) + blob(q, 0.67, 0.40, 0.045, 0.02));
  v -= 0.12 * (blob(q, 0.33, 0.29, 0.07, 0.012) + blob(q, 0.67, 0.29, 0.07, 0.012));
  v -= 0.08 * blob(q, 0.5, 0.56, 0.05, 0.02);
  v -= 0.2 * blob(q, 0.5, 0.72, 0.12, 0.02);
  return v;
}

// Which AU (if any) sets label k, and how.
std::vector<const Coupling*> coupling_targets(const SynthSpec& spec) {
  std::vector<const Coupling*> by_target(static_cast<std::size_t>(spec.K), nullptr);
  for (const Coupling& c : spec.couplings) by_target[static_cast<std::size_t>(c.j)] = &c;
  return by_target;
}

}  // namespace

std::vector<Coupling> parse_couplings(const std::string& text) {
  std::vector<Coupling> out;
  for (const std::string& raw : io::split(text, ';')) {
    const std::string item = io::trim(raw);
    if (item.empty()) continue;
    const auto colon = item.find(':');
    const auto sep = item.find_first_of("-!");
    require(colon != std::string::npos && sep != std::string::npos && sep < colon,
            "coupling '" + item + "' is not i-j:s or i!j:s");
    Coupling c;
    c.i = static_cast<int>(io::parse_int(item.substr(0, sep)));
    c.j = static_cast<int>(io::parse_int(item.substr(sep + 1, colon - sep - 1)));
    c.strength = io::parse_double(item.substr(colon + 1));
    c.exclusive = item[sep] == '!';
    out.push_back(c);
  }
  return out;
}

std::string format_couplings(const std::vector<Coupling>& couplings) {
  std::string out;
  for (const Coupling& c : couplings) {
    if (!out.empty()) out += ";";
    out += std::to_string(c.i) + (c.exclusive ? "!" : "-") + std::to_string(c.j) + ":" + io::format_double(c.strength);
  }
  return out;
}

void SynthSpec::validate() const {
  require(K >= 1, "synth: K must be positive");
  require(image_size >= 8, "synth: image_size too small");
  require(n_subjects >= 0 && per_subject >= 0 && first_subject >= 0, "synth: counts must be non-negative");
  require(static_cast<int>(regions.size()) == K, "synth: need one AU region per AU");
  require(static_cast<int>(au_prior.size()) == K, "synth: need one prior per AU");
  for (double p : au_prior) require(p >= 0.0 && p <= 1.0, "synth: priors must lie in [0, 1]");
  std::set<int> targets;
  for (const Coupling& c : couplings) {
    require(c.i >= 0 && c.i < K && c.j >= 0 && c.j < K && c.i != c.j, "synth: coupling indices out of range");
    require(c.strength >= 0.0 && c.strength <= 1.0, "synth: coupling strengths must lie in [0, 1]");
    require(targets.insert(c.j).second, "synth: an AU can be the target of only one coupling");
  }
  for (const Coupling& c : couplings) require(!targets.count(c.i), "synth: a coupling target cannot also be a source");
  for (const Eigen::Vector2d& site : au_sites(*this, landmark_template())) {
    require(site.x() >= 0.0 && site.x() <= 1.0 && site.y() >= 0.0 && site.y() <= 1.0, "synth: AU site outside the image");
  }
  require(au_amplitude >= 0.0 && au_radius > 0.0 && au_wavelength > 0.0 && pixel_noise >= 0.0 && subject_variation >= 0.0,
          "synth: pattern parameters out of range");
}

std::vector<AuRegionSpec> default_au_regions(int K) {
  require(K == 8 || K == 12, "default AU regions exist for K = 8 and K = 12 only");
  std::vector<AuRegionSpec> r{
      {0, {17, 18, 19, 20, 21}, {0.0, -0.03}},          // left brow
      {1, {22, 23, 24, 25, 26}, {0.0, -0.03}},          // right brow
      {2, {36, 37, 38, 39, 40, 41}, {0.0, 0.0}},        // left eye
      {3, {42, 43, 44, 45, 46, 47}, {0.0, 0.0}},        // right eye
      {4, {29, 30, 31, 33, 35}, {0.0, -0.01}},          // nose
      {5, {48, 49, 59, 60, 67}, {-0.02, 0.0}},          // left mouth corner
      {6, {53, 54, 55, 64, 65}, {0.02, 0.0}},           // right mouth corner
      {7, {6, 7, 8, 9, 10}, {0.0, -0.06}},              // chin
  };
  if (K == 12) {
    r.push_back({8, {50, 51, 52, 61, 62, 63}, {0.0, -0.02}});  // upper lip
    r.push_back({9, {56, 57, 58, 65, 66, 67}, {0.0, 0.02}});   // lower lip
    r.push_back({10, {1, 2, 3, 31, 48}, {0.03, -0.04}});       // left cheek
    r.push_back({11, {13, 14, 15, 35, 54}, {-0.03, -0.04}});   // right cheek
  }
  return r;
}

SynthSpec default_synth_spec(int K) {
  SynthSpec spec;
  spec.K = K;
  spec.regions = default_au_regions(K);
  spec.au_prior.assign(static_cast<std::size_t>(K), 0.3);
  spec.couplings = parse_couplings(K == 8 ? "0-1:0.8;2-3:0.6;5-6:0.7" : "0-1:0.8;2-3:0.6;5-6:0.7;8-9:0.5;10-11:0.6");
  return spec;
}

LabelMatrix sample_labels(const SynthSpec& spec, std::size_t n, Rng& rng) {
  LabelMatrix labels(static_cast<Eigen::Index>(n), spec.K);
  for (std::size_t s = 0; s < n; ++s) {
    const auto r = static_cast<Eigen::Index>(s);
    for (int k = 0; k < spec.K; ++k) labels(r, k) = rng.bernoulli(spec.au_prior[static_cast<std::size_t>(k)]) ? 1 : 0;
    for (const Coupling& c : spec.couplings) {
      if (rng.uniform() >= c.strength) continue;
      labels(r, c.j) = c.exclusive ? labels(r, c.j) * (1 - labels(r, c.i)) : labels(r, c.i);
    }
  }
  return labels;
}

double planted_dice(const SynthSpec& spec, int a, int b) {
  spec.validate();
  require(a >= 0 && a < spec.K && b >= 0 && b < spec.K, "planted_dice: AU index out of range");
  if (a == b) return 1.0;
  const std::vector<const Coupling*> by_target = coupling_targets(spec);
  // Independent variables: the own draws z_k of every AU involved and the
  // coin c_k of each coupling; label k is a function of them.
  std::vector<int> zs{a, b};
  for (int k : {a, b}) {
    if (const Coupling* c = by_target[static_cast<std::size_t>(k)]) zs.push_back(c->i);
  }
  std::sort(zs.begin(), zs.end());
  zs.erase(std::unique(zs.begin(), zs.end()), zs.end());
  const int nz = static_cast<int>(zs.size());
  auto z_slot = [&](int k) { return static_cast<int>(std::find(zs.begin(), zs.end(), k) - zs.begin()); };

  double joint = 0.0, pa = 0.0, pb = 0.0;
  for (int mask = 0; mask < (1 << (nz + 2)); ++mask) {
    double prob = 1.0;
    for (int v = 0; v < nz; ++v) {
      const double p = spec.au_prior[static_cast<std::size_t>(zs[static_cast<std::size_t>(v)])];
      prob *= (mask >> v) & 1 ? p : 1.0 - p;
    }
    auto label = [&](int k, int coin_bit) {
      const int z = (mask >> z_slot(k)) & 1;
      const Coupling* c = by_target[static_cast<std::size_t>(k)];
      const bool coin = (mask >> (nz + coin_bit)) & 1;
      if (!c || !coin) return z;
      const int zi = (mask >> z_slot(c->i)) & 1;
      return c->exclusive ? z * (1 - zi) : zi;
    };
    for (int bit = 0; bit < 2; ++bit) {
      const Coupling* c = by_target[static_cast<std::size_t>(bit == 0 ? a : b)];
      const double s = c ? c->strength : 0.0;
      prob *= (mask >> (nz + bit)) & 1 ? s : 1.0 - s;
    }
    const int ya = label(a, 0), yb = label(b, 1);
    joint += prob * ya * yb;
    pa += prob * ya;
    pb += prob * yb;
  }
  return pa + pb > 0.0 ? 2.0 * joint / (pa + pb) : 0.0;
}

LandmarkSet landmark_template() {
  LandmarkSet l;
  for (int i = 0; i <= 16; ++i) {
    const double a = kPi - kPi * i / 16.0;
    l.points(i, 0) = 0.5 + 0.36 * std::cos(a);
    l.points(i, 1) = 0.40 + 0.46 * std::sin(a);
  }
  place_arc(l, 17, 5, {0.22, 0.30}, {0.44, 0.30}, 0.03);
  place_arc(l, 22, 5, {0.56, 0.30}, {0.78, 0.30}, 0.03);
  place_arc(l, 27, 4, {0.5, 0.37}, {0.5, 0.52}, 0.0);
  place_arc(l, 31, 5, {0.43, 0.57}, {0.57, 0.57}, -0.015);
  place_ring(l, 36, 6, {0.33, 0.40}, 0.065, 0.025);
  place_ring(l, 42, 6, {0.67, 0.40}, 0.065, 0.025);
  place_ring(l, 48, 12, {0.5, 0.72}, 0.14, 0.055);
  place_ring(l, 60, 8, {0.5, 0.72}, 0.09, 0.02);
  return l;
}

SubjectProfile make_subject(const SynthSpec& spec, int subject) {
  Rng rng = Rng(spec.seed).fork(1'000'000 + static_cast<std::uint64_t>(subject));
  SubjectProfile p;
  p.id = subject;
  const double v = spec.subject_variation;
  const double scale = 1.0 + v * rng.uniform(-0.08, 0.05), aspect = 1.0 + v * rng.uniform(-0.05, 0.05),
               angle = v * rng.uniform(-0.06, 0.06);
  const Eigen::Matrix2d rot = Eigen::Rotation2Dd(angle).toRotationMatrix();
  p.warp = rot * Eigen::Vector2d(scale * aspect, scale / aspect).asDiagonal();
  p.shift = v * Eigen::Vector2d(rng.uniform(-0.03, 0.03), rng.uniform(-0.03, 0.03));
  const LandmarkSet base = landmark_template();
  for (int i = 0; i < kLandmarkCount; ++i) {
    const Eigen::Vector2d q = base.points.row(i).transpose();
    const Eigen::Vector2d w = kFaceCenter + p.shift + p.warp * (q - kFaceCenter);
    p.landmarks.points(i, 0) = std::clamp(w.x() + v * rng.normal(0.0, 0.004), 0.0, 1.0);
    p.landmarks.points(i, 1) = std::clamp(w.y() + v * rng.normal(0.0, 0.004), 0.0, 1.0);
  }
  p.tone = v * rng.uniform(-0.08, 0.08);
  for (int r = 0; r < 3; ++r) {
    p.texture(r, 0) = v * rng.uniform(0.02, 0.05);
    p.texture(r, 1) = rng.uniform(-2.0, 2.0);
    p.texture(r, 2) = rng.uniform(-2.0, 2.0);
    p.texture(r, 3) = rng.uniform(0.0, 2.0 * kPi);
  }
  return p;
}

std::vector<Eigen::Vector2d> au_sites(const SynthSpec& spec, const LandmarkSet& landmarks) {
  std::vector<Eigen::Vector2d> sites;
  for (const AuRegionSpec& region : spec.regions) {
    Eigen::Vector2d c = Eigen::Vector2d::Zero();
    const std::vector<Eigen::Vector2d> pts = region_points(landmarks, region);
    for (const auto& p : pts) c += p;
    sites.push_back(c / static_cast<double>(pts.size()));
  }
  return sites;
}

Image render_face(const SynthSpec& spec, const SubjectProfile& subject, const LandmarkSet& landmarks,
                  const Eigen::VectorXi& active, std::uint64_t noise_seed) {
  require(active.size() == spec.K, "render_face: one activation flag per AU");
  const int n = spec.image_size;
  const Eigen::Matrix2d unwarp = subject.warp.inverse();
  const std::vector<Eigen::Vector2d> sites = au_sites(spec, landmarks);
  const double support = 3.0 * spec.au_radius;
  Rng noise(noise_seed);
  Image img(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Eigen::Vector2d p((c + 0.5) / n, (r + 0.5) / n);
      const Eigen::Vector2d q = kFaceCenter + unwarp * (p - kFaceCenter - subject.shift);
      double v = template_face(q) + subject.tone;
      for (int t = 0; t < 3; ++t) {
        v += subject.texture(t, 0) *
             std::cos(2.0 * kPi * (subject.texture(t, 1) * p.x() + subject.texture(t, 2) * p.y()) + subject.texture(t, 3));
      }
      for (int k = 0; k < spec.K; ++k) {
        if (!active[k]) continue;
        const Eigen::Vector2d d = p - sites[static_cast<std::size_t>(k)];
        const double dist = d.norm();
        if (dist > support) continue;
        const double theta = kPi * k / spec.K;
        const double along = d.x() * std::cos(theta) + d.y() * std::sin(theta);
        v += spec.au_amplitude * std::exp(-0.5 * dist * dist / (spec.au_radius * spec.au_radius)) *
             std::cos(2.0 * kPi * along / spec.au_wavelength);
      }
      img(r, c) = std::clamp(v + spec.pixel_noise * noise.normal(), 0.0, 1.0);
    }
  }
  return img;
}

Dataset generate(const SynthSpec& spec) {
  spec.validate();
  Dataset data;
  const auto total = static_cast<Eigen::Index>(spec.n_subjects) * spec.per_subject;
  data.labels.resize(total, spec.K);
  Eigen::Index row = 0;
  for (int s = spec.first_subject; s < spec.first_subject + spec.n_subjects; ++s) {
    const SubjectProfile subject = make_subject(spec, s);
    Rng label_rng = Rng(spec.seed).fork(2'000'000 + static_cast<std::uint64_t>(s));
    const LabelMatrix labels = sample_labels(spec, static_cast<std::size_t>(spec.per_subject), label_rng);
    for (int i = 0; i < spec.per_subject; ++i, ++row) {
      const Eigen::VectorXi active = labels.row(i).transpose();
      const std::uint64_t noise_seed = splitmix64(spec.seed ^ splitmix64((static_cast<std::uint64_t>(s) << 32) | static_cast<std::uint64_t>(i)));
      data.ids.push_back(sample_id(s, i));
      data.subjects.push_back(s);
      data.images.push_back(quantize(render_face(spec, subject, subject.landmarks, active, noise_seed)));
      data.landmarks.push_back(subject.landmarks);
      data.labels.row(row) = labels.row(i);
    }
  }
  return data;
}

DatasetSplit generate_split(const SynthSpec& spec, int train_subjects, int test_subjects) {
  SynthSpec train = spec, test = spec;
  train.n_subjects = train_subjects;
  test.first_subject = spec.first_subject + train_subjects;
  test.n_subjects = test_subjects;
  return {generate(train), generate(test)};
}

SynthSpec GenDataConfig::resolve() const {
  SynthSpec spec = default_synth_spec(K);
  spec.n_subjects = train_subjects;
  spec.per_subject = per_subject;
  spec.seed = seed;
  spec.au_prior.assign(static_cast<std::size_t>(K), prior);
  if (couplings != "default") spec.couplings = parse_couplings(couplings);
  spec.au_amplitude = au_amplitude;
  spec.au_radius = au_radius;
  spec.au_wavelength = au_wavelength;
  spec.pixel_noise = pixel_noise;
  spec.subject_variation = subject_variation;
  spec.validate();
  require(train_subjects >= 1 && test_subjects >= 0, "gen-data: need at least one training subject");
  return spec;
}

const OptionTable<GenDataConfig>& gen_data_options() {
  static const OptionTable<GenDataConfig> table = [] {
    using C = GenDataConfig;
    OptionTable<C> t;
    add_int_option(t, "k", [](C& c) -> int& { return c.K; });
    add_int_option(t, "train_subjects", [](C& c) -> int& { return c.train_subjects; });
    add_int_option(t, "test_subjects", [](C& c) -> int& { return c.test_subjects; });
    add_int_option(t, "per_subject", [](C& c) -> int& { return c.per_subject; });
    add_int_option(t, "seed", [](C& c) -> std::uint64_t& { return c.seed; });
    add_double_option(t, "prior", [](C& c) -> double& { return c.prior; });
    add_string_option(t, "couplings", [](C& c) -> std::string& { return c.couplings; });
    add_double_option(t, "au_amplitude", [](C& c) -> double& { return c.au_amplitude; });
    add_double_option(t, "au_radius", [](C& c) -> double& { return c.au_radius; });
    add_double_option(t, "au_wavelength", [](C& c) -> double& { return c.au_wavelength; });
    add_double_option(t, "pixel_noise", [](C& c) -> double& { return c.pixel_noise; });
    add_double_option(t, "subject_variation", [](C& c) -> double& { return c.subject_variation; });
    return t;
  }();
  return table;
}

}  // namespace rrl
