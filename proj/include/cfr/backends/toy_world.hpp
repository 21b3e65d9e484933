#pragma once

// Shared vocabulary of the desk-scale synthetic world: scene backgrounds with
// fixed colors and object classes drawn as dark masks on a 4x4 cell grid.
// The toy captioner, generator, and joint encoder all read and render images
// through this one table, which is what lets caption edits become pixel edits.

#include "cfr/backends/types.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cfr::toy {

// splitmix64; platform-stable so toy outputs are bit-identical everywhere.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  double uniform();  // [0,1)
  double normal();   // Box-Muller
  std::uint64_t below(std::uint64_t n) { return next() % n; }

 private:
  std::uint64_t state_;
};

struct Rgb {
  double r = 0, g = 0, b = 0;
  double channel(int c) const { return c == 0 ? r : (c == 1 ? g : b); }
  double luminance() const { return 0.299 * r + 0.587 * g + 0.114 * b; }
};

struct SceneBackground {
  std::string word;
  Rgb color;
};

struct ObjectClass {
  std::string name;
  std::vector<std::string> tokens;
  std::array<bool, 16> cells{};
};

enum class Domain { kPhoto, kSketch, kPainting, kCartoon };

class SceneVocabulary {
 public:
  static constexpr int kGrid = 4;
  static constexpr double kForegroundShade = 0.08;
  static constexpr double kNeutralGray = 0.5;

  static const SceneVocabulary& standard();

  const std::vector<SceneBackground>& backgrounds() const { return backgrounds_; }
  const std::vector<ObjectClass>& objects() const { return objects_; }
  const std::vector<std::string>& domain_words() const { return domain_words_; }
  std::vector<std::string> class_names() const;

  std::optional<std::size_t> find_background(const std::vector<std::string>& tokens) const;
  std::optional<std::size_t> find_object(const std::vector<std::string>& tokens) const;
  std::optional<std::size_t> object_index(const std::string& name) const;
  std::optional<std::size_t> background_index(const std::string& word) const;
  Domain find_domain(const std::vector<std::string>& tokens) const;

  // Caption -> image-shaped vector: background color, dark object mask, then
  // the domain transform. Unknown words contribute nothing.
  Eigen::VectorXd render(const std::vector<std::string>& tokens, int channels, int height, int width) const;

  // Perception helpers used by toy captioner and encoder.
  Rgb background_estimate(const ImageTensor& image) const;
  std::vector<double> background_affinity(const ImageTensor& image, double temperature) const;
  std::optional<std::size_t> recognize_object(const ImageTensor& image) const;
  double sketch_score(const ImageTensor& image) const;  // 1 for grayscale, 0 for saturated

 private:
  SceneVocabulary();

  std::vector<SceneBackground> backgrounds_;
  std::vector<ObjectClass> objects_;
  std::vector<std::string> domain_words_;
};

int cell_of(int y, int x, int height, int width);
std::vector<Rgb> cell_means(const ImageTensor& image);
double pixel_channel(const Rgb& color, int channel, int channels);

// Signed feature hashing of a token into `dim` buckets.
std::pair<std::size_t, double> hash_bucket(const std::string& token, std::uint64_t salt, std::size_t dim);
bool is_stopword(const std::string& token);

}  // namespace cfr::toy
