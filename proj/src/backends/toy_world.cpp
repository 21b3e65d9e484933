#include "cfr/backends/toy_world.hpp"

#include "cfr/common.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>

namespace cfr::toy {

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

double SplitMix64::normal() {
  double u1 = uniform();
  double u2 = uniform();
  if (u1 < 1e-300) u1 = 1e-300;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

namespace {

const std::vector<std::string> kClassNames = {
    "dog sled", "howler monkey", "seat belt", "ski",      "canoe", "snorkel", "balloon", "volleyball",
    "tractor",  "lighthouse",    "umbrella",  "kite",     "tent",  "kayak",   "bicycle", "toboggan"};

double distance2(const Rgb& a, const Rgb& b) {
  return (a.r - b.r) * (a.r - b.r) + (a.g - b.g) * (a.g - b.g) + (a.b - b.b) * (a.b - b.b);
}

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

SceneVocabulary::SceneVocabulary() {
  backgrounds_ = {
      {"snow", {0.93, 0.95, 0.98}},  {"grass", {0.30, 0.68, 0.25}}, {"beach", {0.94, 0.82, 0.52}},
      {"water", {0.18, 0.42, 0.80}}, {"mountain", {0.55, 0.45, 0.38}}, {"road", {0.36, 0.36, 0.38}},
      {"sunset", {0.95, 0.52, 0.28}}, {"sky", {0.55, 0.78, 0.95}},
  };
  domain_words_ = {"photo", "sketch", "painting", "cartoon"};

  // Five-cell masks with pairwise Hamming distance >= 4, drawn from a fixed stream.
  SplitMix64 rng(0x5eed0b1ec7ULL);
  std::vector<std::array<bool, 16>> masks;
  while (masks.size() < kClassNames.size()) {
    std::array<bool, 16> m{};
    int placed = 0;
    while (placed < 5) {
      auto cell = rng.below(16);
      if (!m[cell]) {
        m[cell] = true;
        ++placed;
      }
    }
    bool distinct = true;
    for (const auto& other : masks) {
      int hamming = 0;
      for (int i = 0; i < 16; ++i) hamming += m[i] != other[i];
      if (hamming < 4) distinct = false;
    }
    if (distinct) masks.push_back(m);
  }
  for (std::size_t i = 0; i < kClassNames.size(); ++i) {
    objects_.push_back({kClassNames[i], tokenize(kClassNames[i]), masks[i]});
  }
}

const SceneVocabulary& SceneVocabulary::standard() {
  static const SceneVocabulary vocab;
  return vocab;
}

std::vector<std::string> SceneVocabulary::class_names() const {
  std::vector<std::string> out;
  for (const auto& o : objects_) out.push_back(o.name);
  return out;
}

std::optional<std::size_t> SceneVocabulary::find_background(const std::vector<std::string>& tokens) const {
  // Last mention wins; captions name the setting after the object.
  std::optional<std::size_t> found;
  for (const auto& t : tokens) {
    if (auto idx = background_index(t)) found = idx;
  }
  return found;
}

std::optional<std::size_t> SceneVocabulary::find_object(const std::vector<std::string>& tokens) const {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    for (std::size_t o = 0; o < objects_.size(); ++o) {
      const auto& name = objects_[o].tokens;
      if (i + name.size() <= tokens.size() && std::equal(name.begin(), name.end(), tokens.begin() + i)) return o;
    }
  }
  return std::nullopt;
}

std::optional<std::size_t> SceneVocabulary::object_index(const std::string& name) const {
  for (std::size_t o = 0; o < objects_.size(); ++o) {
    if (objects_[o].name == name) return o;
  }
  return std::nullopt;
}

std::optional<std::size_t> SceneVocabulary::background_index(const std::string& word) const {
  for (std::size_t b = 0; b < backgrounds_.size(); ++b) {
    if (backgrounds_[b].word == word) return b;
  }
  return std::nullopt;
}

Domain SceneVocabulary::find_domain(const std::vector<std::string>& tokens) const {
  for (const auto& t : tokens) {
    if (t == "sketch" || t == "drawing") return Domain::kSketch;
    if (t == "painting") return Domain::kPainting;
    if (t == "cartoon") return Domain::kCartoon;
  }
  return Domain::kPhoto;
}

int cell_of(int y, int x, int height, int width) {
  const int g = SceneVocabulary::kGrid;
  return (y * g / height) * g + (x * g / width);
}

double pixel_channel(const Rgb& color, int channel, int channels) {
  if (channels == 1) return color.luminance();
  return color.channel(std::min(channel, 2));
}

Eigen::VectorXd SceneVocabulary::render(const std::vector<std::string>& tokens, int channels, int height,
                                        int width) const {
  const auto bg = find_background(tokens);
  const auto obj = find_object(tokens);
  const Domain domain = find_domain(tokens);
  const Rgb base = bg ? backgrounds_[*bg].color : Rgb{kNeutralGray, kNeutralGray, kNeutralGray};
  const Rgb dark{kForegroundShade, kForegroundShade, kForegroundShade};

  ImageTensor img("render", channels, height, width);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const bool fg = obj && objects_[*obj].cells[static_cast<std::size_t>(cell_of(y, x, height, width))];
      Rgb px = fg ? dark : base;
      if (domain != Domain::kPhoto && channels >= 3) {
        const double lum = px.luminance();
        auto apply = [&](double v) {
          switch (domain) {
            case Domain::kSketch: return lum;
            case Domain::kPainting: return std::clamp(lum + 1.6 * (v - lum), 0.0, 1.0);
            case Domain::kCartoon: return std::floor(v * 4.0 + 0.5) / 4.0;
            case Domain::kPhoto: break;
          }
          return v;
        };
        px = {apply(px.r), apply(px.g), apply(px.b)};
      }
      for (int c = 0; c < channels; ++c) img.at(c, y, x) = pixel_channel(px, c, channels);
    }
  }
  return img.data();
}

std::vector<Rgb> cell_means(const ImageTensor& image) {
  const int g = SceneVocabulary::kGrid;
  std::vector<Rgb> sums(static_cast<std::size_t>(g * g));
  std::vector<int> counts(sums.size(), 0);
  const int C = image.channels();
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const auto cell = static_cast<std::size_t>(cell_of(y, x, image.height(), image.width()));
      const double r = image.at(0, y, x);
      const double gg = image.at(std::min(1, C - 1), y, x);
      const double b = image.at(std::min(2, C - 1), y, x);
      sums[cell].r += r;
      sums[cell].g += gg;
      sums[cell].b += b;
      ++counts[cell];
    }
  }
  for (std::size_t i = 0; i < sums.size(); ++i) {
    if (counts[i] == 0) continue;
    sums[i].r /= counts[i];
    sums[i].g /= counts[i];
    sums[i].b /= counts[i];
  }
  return sums;
}

Rgb SceneVocabulary::background_estimate(const ImageTensor& image) const {
  // Objects cover at most 5 of 16 cells, so the per-channel median is background.
  const auto cells = cell_means(image);
  std::vector<double> r, g, b;
  for (const auto& c : cells) {
    r.push_back(c.r);
    g.push_back(c.g);
    b.push_back(c.b);
  }
  return {median_of(r), median_of(g), median_of(b)};
}

std::vector<double> SceneVocabulary::background_affinity(const ImageTensor& image, double temperature) const {
  const Rgb est = background_estimate(image);
  std::vector<double> logits;
  for (const auto& bg : backgrounds_) logits.push_back(-distance2(est, bg.color) / temperature);
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0;
  for (auto& l : logits) z += (l = std::exp(l - m));
  for (auto& l : logits) l /= z;
  return logits;
}

std::optional<std::size_t> SceneVocabulary::recognize_object(const ImageTensor& image) const {
  const Rgb bg = background_estimate(image);
  const auto cells = cell_means(image);
  std::array<bool, 16> dark{};
  for (std::size_t i = 0; i < cells.size(); ++i) {
    dark[i] = cells[i].luminance() < bg.luminance() - 0.1 && std::sqrt(distance2(cells[i], bg)) > 0.15;
  }
  std::optional<std::size_t> best;
  double best_score = 0.6;  // minimum Jaccard overlap to name an object
  for (std::size_t o = 0; o < objects_.size(); ++o) {
    int inter = 0, uni = 0;
    for (int i = 0; i < 16; ++i) {
      inter += dark[i] && objects_[o].cells[i];
      uni += dark[i] || objects_[o].cells[i];
    }
    const double score = uni ? static_cast<double>(inter) / uni : 0.0;
    if (score > best_score) {
      best_score = score;
      best = o;
    }
  }
  return best;
}

double SceneVocabulary::sketch_score(const ImageTensor& image) const {
  if (image.channels() < 3) return 1.0;
  double sat = 0;
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      const double r = image.at(0, y, x), g = image.at(1, y, x), b = image.at(2, y, x);
      sat += std::max({r, g, b}) - std::min({r, g, b});
    }
  }
  sat /= static_cast<double>(image.height() * image.width());
  // Logistic ramp centred at 0.08 mean channel spread.
  return 1.0 / (1.0 + std::exp((sat - 0.08) / 0.015));
}

std::pair<std::size_t, double> hash_bucket(const std::string& token, std::uint64_t salt, std::size_t dim) {
  const std::uint64_t h = fnv1a64(token, 0xcbf29ce484222325ULL ^ (salt * 0x9e3779b97f4a7c15ULL));
  return {static_cast<std::size_t>((h >> 1) % dim), (h & 1) ? 1.0 : -1.0};
}

bool is_stopword(const std::string& token) {
  static const std::set<std::string> kStop = {"a",  "an", "the", "of",   "on",  "in", "at", "to",  "and",
                                              "is", "it", "by",  "with", "for", "as", "its", "or", "are"};
  return kStop.count(token) != 0;
}

}  // namespace cfr::toy
