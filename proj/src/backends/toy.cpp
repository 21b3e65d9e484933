#include "cfr/backends/toy.hpp"

#include "cfr/common.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace cfr::toy {

namespace {

const std::vector<std::string> kCaptionTemplates = {
    "a {domain} of a {object} on the {background} with a man standing nearby and holding an apple in the bright "
    "afternoon light",
    "a {domain} showing a {object} resting on the {background} while a woman carries a bag past the quiet scene",
    "a detailed {domain} of a {object} placed on the {background} where a boy looks at a ball under an old wooden "
    "sign",
    "a wide {domain} with a {object} near the {background} as a girl holds a cup beside a small red bench",
};

const std::vector<std::string> kFillerWords = {"in",     "clear",   "weather", "with",   "soft",   "shadows",
                                               "and",    "calm",    "colors",  "around", "the",    "edges",
                                               "of",     "frame",   "showing", "fine",   "texture", "everywhere"};

std::string replace_all(std::string text, const std::string& key, const std::string& value) {
  for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
    text.replace(pos, key.size(), value);
  }
  return text;
}

std::string normalize_word(const std::string& word) {
  auto t = tokenize(word);
  return t.size() == 1 ? t.front() : std::string{};
}

}  // namespace

// ---------------------------------------------------------------- captioner

std::size_t ToyCaptioner::template_count() { return kCaptionTemplates.size(); }

BackendDescriptor ToyCaptioner::descriptor() const {
  return {BackendKind::kCaptioner, "toy-captioner", true, seed_, 0};
}

std::string ToyCaptioner::do_caption(const ImageTensor& image, int min_words, double repetition_penalty) const {
  const auto& vocab = SceneVocabulary::standard();
  const auto bg = vocab.background_affinity(image, 0.02);
  const auto best_bg = static_cast<std::size_t>(std::max_element(bg.begin(), bg.end()) - bg.begin());
  const auto obj = vocab.recognize_object(image);

  std::string text = kCaptionTemplates[seed_ % kCaptionTemplates.size()];
  text = replace_all(text, "{domain}", vocab.sketch_score(image) > 0.5 ? "sketch" : "photo");
  text = replace_all(text, "{object}", obj ? vocab.objects()[*obj].name : "object");
  text = replace_all(text, "{background}", vocab.backgrounds()[best_bg].word);

  auto words = split_whitespace(text);
  std::map<std::string, int> counts;
  for (const auto& w : words) ++counts[w];

  std::vector<std::string> pool = kFillerWords;
  SplitMix64 rng(fnv1a64(image.id()) ^ (seed_ * 0x9e3779b97f4a7c15ULL));
  for (std::size_t i = pool.size(); i > 1; --i) std::swap(pool[i - 1], pool[rng.below(i)]);

  // A word already used c times is admitted only while penalty^-c stays >= 0.8.
  std::size_t cursor = 0;
  while (static_cast<int>(words.size()) < min_words) {
    bool placed = false;
    for (std::size_t tries = 0; tries < pool.size() && !placed; ++tries, ++cursor) {
      const auto& w = pool[cursor % pool.size()];
      if (std::pow(repetition_penalty, -counts[w]) >= 0.8) {
        words.push_back(w);
        ++counts[w];
        placed = true;
      }
    }
    if (!placed) {
      const auto& w = *std::min_element(pool.begin(), pool.end(),
                                        [&](const auto& x, const auto& y) { return counts[x] < counts[y]; });
      words.push_back(w);
      ++counts[w];
    }
  }
  return join(words, " ");
}

// ---------------------------------------------------------------- perturber

ToyPerturber::ToyPerturber(std::uint64_t seed) : seed_(seed) {
  lexicons_[VariationFactor::kSubject] = {
      {"man", {"woman", "boy", "girl"}},   {"woman", {"man", "girl", "boy"}}, {"boy", {"girl", "man", "woman"}},
      {"girl", {"boy", "woman", "man"}},   {"football", {"basketball", "baseball"}},
  };
  lexicons_[VariationFactor::kObject] = {
      {"apple", {"orange", "pear", "banana"}}, {"bag", {"box", "basket"}}, {"ball", {"frisbee", "cube"}},
      {"cup", {"mug", "bowl"}},                {"bench", {"chair", "stool"}}, {"sign", {"poster", "flag"}},
  };
  auto& bg = lexicons_[VariationFactor::kBackground];
  for (const auto& from : SceneVocabulary::standard().backgrounds()) {
    for (const auto& to : SceneVocabulary::standard().backgrounds()) {
      if (to.word != from.word) bg[from.word].push_back(to.word);
    }
  }
  // Keep the canonical mountain -> beach swap first in its list.
  auto& mountain = bg["mountain"];
  std::stable_partition(mountain.begin(), mountain.end(), [](const auto& w) { return w == "beach"; });
  lexicons_[VariationFactor::kAdjective] = {
      {"old", {"new", "young"}},       {"new", {"old"}},          {"young", {"old"}},
      {"bright", {"dim", "dark"}},     {"small", {"large", "tiny"}}, {"quiet", {"busy", "noisy"}},
      {"wooden", {"metal", "plastic"}}, {"red", {"blue", "green"}}, {"wide", {"narrow"}},
      {"detailed", {"blurry"}},        {"soft", {"harsh"}},        {"calm", {"vivid"}},
      {"clear", {"hazy"}},
  };
  lexicons_[VariationFactor::kDataDomain] = {
      {"photo", {"sketch", "painting", "cartoon"}}, {"sketch", {"photo", "painting"}},
      {"painting", {"photo", "sketch"}},            {"cartoon", {"photo", "sketch"}},
      {"picture", {"sketch", "painting"}},
  };
}

BackendDescriptor ToyPerturber::descriptor() const {
  return {BackendKind::kPerturber, "toy-perturber", true, seed_, 0};
}

const std::map<std::string, std::vector<std::string>>& ToyPerturber::lexicon(VariationFactor factor) const {
  return lexicons_.at(factor);
}

std::vector<std::string> ToyPerturber::do_perturb(const std::string& caption, VariationFactor factor, int n) const {
  const auto& lex = lexicons_.at(factor);
  const auto words = split_whitespace(caption);
  const std::uint64_t rot_seed = fnv1a64(caption + "|" + std::string(to_string(factor))) ^ seed_;
  std::vector<std::string> out;
  for (std::size_t i = 0; i < words.size() && static_cast<int>(out.size()) < n; ++i) {
    auto it = lex.find(normalize_word(words[i]));
    if (it == lex.end()) continue;
    const auto& options = it->second;
    // Seed rotates which replacement comes first; the list order is otherwise fixed.
    const std::size_t start = seed_ == 0 ? 0 : static_cast<std::size_t>(rot_seed % options.size());
    for (std::size_t j = 0; j < options.size() && static_cast<int>(out.size()) < n; ++j) {
      auto edited = words;
      edited[i] = options[(start + j) % options.size()];
      std::string text = join(edited, " ");
      if (text != caption && std::find(out.begin(), out.end(), text) == out.end()) out.push_back(std::move(text));
    }
  }
  return out;
}

// ---------------------------------------------------------------- sentence embedder

BackendDescriptor ToySentenceEmbedder::descriptor() const {
  return {BackendKind::kSentenceEmbedder, "toy-sentence-embedder", true, seed_, dim_};
}

EmbeddingVector ToySentenceEmbedder::do_embed(const std::string& text) const {
  const auto tokens = tokenize(text);
  std::vector<std::string> content;
  for (const auto& t : tokens) {
    if (!is_stopword(t)) content.push_back(t);
  }
  if (content.empty()) content = tokens;
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  for (const auto& t : content) {
    auto [bucket, sign] = hash_bucket(t, seed_ + 0x51, static_cast<std::size_t>(dim_));
    v[static_cast<Eigen::Index>(bucket)] += sign;
  }
  const double n = v.norm();
  if (n > 0) v /= n;
  return {v};
}

// ---------------------------------------------------------------- joint encoder

BackendDescriptor ToyJointEncoder::descriptor() const {
  return {BackendKind::kJointEncoder, "toy-joint-encoder", true, seed_, dim_};
}

Eigen::VectorXd ToyJointEncoder::token_vector(const std::string& token) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  auto [bucket, sign] = hash_bucket(token, seed_ + 0xc11b, static_cast<std::size_t>(dim_));
  v[static_cast<Eigen::Index>(bucket)] = sign;
  return v;
}

EmbeddingVector ToyJointEncoder::do_encode_text(const std::string& text) const {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  for (const auto& t : tokenize(text)) {
    if (!is_stopword(t)) v += token_vector(t);
  }
  const double n = v.norm();
  if (n > 0) v /= n;
  return {v};
}

EmbeddingVector ToyJointEncoder::do_encode_image(const ImageTensor& image) const {
  const auto& vocab = SceneVocabulary::standard();
  Eigen::VectorXd v = Eigen::VectorXd::Zero(dim_);
  const auto affinity = vocab.background_affinity(image, temperature_);
  for (std::size_t j = 0; j < affinity.size(); ++j) v += affinity[j] * token_vector(vocab.backgrounds()[j].word);
  const double sketch = vocab.sketch_score(image);
  v += sketch * token_vector("sketch") + (1.0 - sketch) * token_vector("photo");
  if (auto obj = vocab.recognize_object(image)) {
    for (const auto& t : vocab.objects()[*obj].tokens) v += token_vector(t);
  }
  return {v / v.norm()};
}

// ---------------------------------------------------------------- generator

ToyGenerator::ToyGenerator(int channels, int height, int width, std::vector<StepCoefficients> steps,
                           std::uint64_t seed)
    : channels_(channels), height_(height), width_(width), steps_(std::move(steps)), seed_(seed) {
  require(channels >= 1 && height >= 1 && width >= 1, ErrorCode::kInvalidArgument, "generator image shape");
  require(!steps_.empty(), ErrorCode::kInvalidArgument, "generator needs at least one step");
  for (std::size_t k = 0; k < steps_.size(); ++k) {
    const auto& s = steps_[k];
    require(std::isfinite(s.a) && std::isfinite(s.b) && std::isfinite(s.d), ErrorCode::kNonFinite,
            "step coefficients must be finite");
    require(s.a != 0.0, ErrorCode::kInvalidArgument, "step " + std::to_string(k + 1) + ": a_k must be nonzero");
    require(s.b != 0.0, ErrorCode::kInvalidArgument, "step " + std::to_string(k + 1) + ": b_k must be nonzero");
  }
}

ToyGenerator ToyGenerator::with_guidance(int channels, int height, int width, int steps, double guidance_scale,
                                         std::uint64_t seed) {
  require(steps >= 1, ErrorCode::kInvalidArgument, "steps must be >= 1");
  require(guidance_scale != 1.0 && guidance_scale > 0.0, ErrorCode::kInvalidArgument,
          "guidance scale must be positive and != 1 (at 1 the null embedding has no effect)");
  std::vector<StepCoefficients> coeffs(static_cast<std::size_t>(steps));
  double reach = 0.0;  // sum over k of prod_{j<k} a_j
  double prefix = 1.0;
  for (int k = 1; k <= steps; ++k) {
    coeffs[static_cast<std::size_t>(k - 1)].a = 1.0 - 0.05 * k / steps;
    reach += prefix;
    prefix *= coeffs[static_cast<std::size_t>(k - 1)].a;
  }
  const double beta = 1.0 / (guidance_scale * reach);
  for (auto& c : coeffs) {
    c.b = (1.0 - guidance_scale) * beta;
    c.d = guidance_scale * beta;
  }
  return ToyGenerator(channels, height, width, std::move(coeffs), seed);
}

BackendDescriptor ToyGenerator::descriptor() const {
  return {BackendKind::kGenerator, "toy-generator", true, seed_, latent_dim()};
}

LatentVector ToyGenerator::encode(const ImageTensor& image) const {
  image.validate();
  require(image.channels() == channels_ && image.height() == height_ && image.width() == width_,
          ErrorCode::kShapeMismatch, "image '" + image.id() + "' does not match the generator's shape");
  return {image.data(), 0};
}

ImageTensor ToyGenerator::decode(const LatentVector& latent, const std::string& id) const {
  require(latent.data.size() == latent_dim(), ErrorCode::kDimensionMismatch, "latent width");
  return ImageTensor(id, channels_, height_, width_, latent.data.cwiseMax(0.0).cwiseMin(1.0));
}

EmbeddingVector ToyGenerator::embed_text(const std::string& text) const {
  return {SceneVocabulary::standard().render(tokenize(text), channels_, height_, width_)};
}

EmbeddingVector ToyGenerator::null_embedding() const { return {Eigen::VectorXd::Zero(latent_dim())}; }

Eigen::VectorXd ToyGenerator::do_denoise_step(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                                              const Eigen::VectorXd& null, double) const {
  require(text.size() == z.size(), ErrorCode::kDimensionMismatch, "text embedding width does not match the latent");
  const auto& s = coefficients(k);
  return s.a * z + s.b * null + s.d * text;
}

Eigen::VectorXd ToyGenerator::do_invert_step(const Eigen::VectorXd& z_prev, int k, const Eigen::VectorXd& text) const {
  // Inversion runs conditional-only, i.e. with the null slot also holding `text`.
  require(text.size() == z_prev.size(), ErrorCode::kDimensionMismatch, "text embedding width does not match the latent");
  const auto& s = coefficients(k);
  return (z_prev - (s.b + s.d) * text) / s.a;
}

Eigen::VectorXd ToyGenerator::do_null_vjp(const Eigen::VectorXd&, int k, const Eigen::VectorXd&,
                                          const Eigen::VectorXd&, double, const Eigen::VectorXd& upstream) const {
  return coefficients(k).b * upstream;
}

Eigen::VectorXd ToyGenerator::do_null_jvp(const Eigen::VectorXd&, int k, const Eigen::VectorXd&,
                                          const Eigen::VectorXd&, double, const Eigen::VectorXd& direction) const {
  return coefficients(k).b * direction;
}

// ---------------------------------------------------------------- classifier

ToyClassifier::ToyClassifier(std::vector<std::string> class_names, ParameterSet params, std::uint64_t seed)
    : class_names_(std::move(class_names)), params_(std::move(params)), seed_(seed) {
  check_layout();
}

void ToyClassifier::check_layout() const {
  for (const char* g : {"body.weight", "body.bias", "head.weight", "head.bias"}) {
    require(params_.contains(g), ErrorCode::kInvalidArgument, std::string("toy classifier needs group ") + g);
  }
  const auto& hw = params_.group("head.weight").shape;
  const auto& bw = params_.group("body.weight").shape;
  require(hw.size() == 2 && bw.size() == 2 && hw[1] == bw[0], ErrorCode::kShapeMismatch,
          "head/body widths disagree");
  require(!class_names_.empty() ? hw[0] == static_cast<Eigen::Index>(class_names_.size()) : true,
          ErrorCode::kShapeMismatch, "head rows do not match the class set");
  require(params_.is_head("head.weight") && params_.is_head("head.bias") && !params_.is_head("body.weight"),
          ErrorCode::kInvalidArgument, "toy classifier head must be exactly head.*");
}

ToyClassifier ToyClassifier::create(std::vector<std::string> class_names, int channels, int height, int width,
                                    double feature_scale, std::uint64_t seed) {
  const int grid = SceneVocabulary::kGrid;
  const Eigen::Index features = static_cast<Eigen::Index>(channels) * grid * grid;
  const Eigen::Index inputs = static_cast<Eigen::Index>(channels) * height * width;
  const auto n_classes = static_cast<Eigen::Index>(class_names.size());

  Eigen::MatrixXd body = Eigen::MatrixXd::Zero(features, inputs);
  std::vector<int> cell_count(static_cast<std::size_t>(grid * grid), 0);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) ++cell_count[static_cast<std::size_t>(cell_of(y, x, height, width))];
  for (int c = 0; c < channels; ++c) {
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const int cell = cell_of(y, x, height, width);
        const Eigen::Index row = static_cast<Eigen::Index>(c) * grid * grid + cell;
        const Eigen::Index col = (static_cast<Eigen::Index>(c) * height + y) * width + x;
        body(row, col) = feature_scale / cell_count[static_cast<std::size_t>(cell)];
      }
    }
  }
  Eigen::VectorXd body_bias = Eigen::VectorXd::Constant(features, -0.5 * feature_scale);

  SplitMix64 rng(seed ^ 0xc1a55ULL);
  Eigen::VectorXd head(n_classes * features);
  for (Eigen::Index i = 0; i < head.size(); ++i) head[i] = 0.01 * rng.normal();

  // Row-major flattening for the stored groups.
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> body_rm = body;
  ParameterSet params;
  params.add("body.weight", {features, inputs}, Eigen::Map<Eigen::VectorXd>(body_rm.data(), body_rm.size()), false);
  params.add("body.bias", {features}, body_bias, false);
  params.add("head.weight", {n_classes, features}, head, true);
  params.add("head.bias", {n_classes}, Eigen::VectorXd::Zero(n_classes), true);
  return ToyClassifier(std::move(class_names), std::move(params), seed);
}

ToyClassifier ToyClassifier::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "classes.json");
  require(static_cast<bool>(in), ErrorCode::kIo, "cannot read " + (dir / "classes.json").string());
  nlohmann::json meta;
  try {
    in >> meta;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kIo, "malformed classes.json in " + dir.string() + ": " + e.what());
  }
  return ToyClassifier(meta.at("class_names").get<std::vector<std::string>>(), ParameterSet::load(dir),
                       meta.value("seed", std::uint64_t{0}));
}

void ToyClassifier::save(const std::filesystem::path& dir) const {
  params_.save(dir);
  std::ofstream out(dir / "classes.json");
  require(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + (dir / "classes.json").string());
  out << nlohmann::json{{"class_names", class_names_}, {"seed", seed_}}.dump(2) << "\n";
}

BackendDescriptor ToyClassifier::descriptor() const {
  return {BackendKind::kClassifier, "toy-classifier", true, seed_,
          static_cast<int>(params_.group("head.weight").shape[1])};
}

void ToyClassifier::set_parameters(const ParameterSet& params) {
  require(params.same_layout(params_), ErrorCode::kShapeMismatch, "parameter layout differs from the classifier's");
  params.validate();
  params_ = params;
}

std::unique_ptr<TrainableClassifier> ToyClassifier::clone() const { return std::make_unique<ToyClassifier>(*this); }

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMajor> as_matrix(const ParameterGroup& g) {
  return {g.values.data(), g.shape[0], g.shape[1]};
}

}  // namespace

Eigen::VectorXd ToyClassifier::features(const ImageTensor& image) const {
  const auto& bw = params_.group("body.weight");
  require(image.size() == bw.shape[1], ErrorCode::kShapeMismatch,
          "image '" + image.id() + "' has " + std::to_string(image.size()) + " values, classifier expects " +
              std::to_string(bw.shape[1]));
  return as_matrix(bw) * image.data() + params_.group("body.bias").values;
}

Eigen::VectorXd ToyClassifier::logits(const ImageTensor& image) const {
  return as_matrix(params_.group("head.weight")) * features(image) + params_.group("head.bias").values;
}

ScoreVector ToyClassifier::do_classify(const ImageTensor& image) const {
  Eigen::VectorXd l = logits(image);
  Eigen::VectorXd p = (l.array() - l.maxCoeff()).exp();
  p /= p.sum();
  return {std::vector<double>(p.data(), p.data() + p.size()), class_names_};
}

double ToyClassifier::head_loss_and_gradient(std::span<const ImageTensor> images, std::span<const int> labels,
                                             ParameterSet& gradient) const {
  require(images.size() == labels.size() && !images.empty(), ErrorCode::kInvalidArgument,
          "batch images and labels differ in length or are empty");
  const auto& hw = params_.group("head.weight");
  const Eigen::Index C = hw.shape[0], F = hw.shape[1];
  RowMajor grad_w = RowMajor::Zero(C, F);
  Eigen::VectorXd grad_b = Eigen::VectorXd::Zero(C);
  double loss = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    require(labels[i] >= 0 && labels[i] < C, ErrorCode::kUnknownClass, "label index out of range");
    const Eigen::VectorXd f = features(images[i]);
    Eigen::VectorXd l = as_matrix(hw) * f + params_.group("head.bias").values;
    const double m = l.maxCoeff();
    Eigen::VectorXd p = (l.array() - m).exp();
    const double z = p.sum();
    p /= z;
    loss += -(l[labels[i]] - m - std::log(z));
    p[labels[i]] -= 1.0;
    grad_w.noalias() += p * f.transpose();
    grad_b += p;
  }
  const double inv = 1.0 / static_cast<double>(images.size());
  grad_w *= inv;
  grad_b *= inv;
  gradient = ParameterSet{};
  gradient.add("head.weight", {C, F}, Eigen::Map<const Eigen::VectorXd>(grad_w.data(), grad_w.size()), true);
  gradient.add("head.bias", {C}, grad_b, true);
  return loss * inv;
}

}  // namespace cfr::toy
