#include "cfr/backends/process.hpp"

#include "cfr/backends/registry.hpp"
#include "cfr/common.hpp"

#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <thread>

namespace cfr {

using nlohmann::json;

StdioChannel::StdioChannel(const std::string& command) : command_(command) {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
    fail(ErrorCode::kBackendUnavailable, "socketpair failed for '" + command + "': " + std::strerror(errno));
  }
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(fds[0]);
    ::close(fds[1]);
    fail(ErrorCode::kBackendUnavailable, "fork failed for '" + command + "'");
  }
  if (pid == 0) {
    ::dup2(fds[1], STDIN_FILENO);
    ::dup2(fds[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  fd_ = fds[0];
  pid_ = pid;
}

StdioChannel::~StdioChannel() {
  if (fd_ >= 0) {
    ::shutdown(fd_, SHUT_WR);
    ::close(fd_);
  }
  if (pid_ > 0) {
    using namespace std::chrono_literals;
    for (int i = 0; i < 100; ++i) {
      if (::waitpid(pid_, nullptr, WNOHANG) != 0) return;
      std::this_thread::sleep_for(10ms);
    }
    ::kill(pid_, SIGKILL);
    ::waitpid(pid_, nullptr, 0);
  }
}

std::string StdioChannel::read_line() {
  for (;;) {
    if (auto pos = buffer_.find('\n'); pos != std::string::npos) {
      std::string line = buffer_.substr(0, pos);
      buffer_.erase(0, pos + 1);
      return line;
    }
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCode::kBackendUnavailable, "adapter '" + command_ + "' closed its output");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

json StdioChannel::call(const std::string& op, const json& args) {
  std::lock_guard lock(mutex_);
  const std::string line = json{{"op", op}, {"args", args}}.dump() + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) fail(ErrorCode::kBackendUnavailable, "adapter '" + command_ + "' is not accepting requests");
    sent += static_cast<std::size_t>(n);
  }
  json response;
  try {
    response = json::parse(read_line());
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kBackendFailure, "adapter '" + command_ + "' sent malformed JSON: " + e.what());
  }
  if (!response.value("ok", false)) {
    fail(ErrorCode::kBackendFailure,
         "adapter '" + command_ + "' op '" + op + "': " + response.value("error", std::string("unspecified error")));
  }
  return response.value("result", json());
}

json image_to_json(const ImageTensor& image) {
  return {{"id", image.id()},
          {"shape", {image.channels(), image.height(), image.width()}},
          {"data", std::vector<double>(image.data().data(), image.data().data() + image.size())}};
}

ImageTensor image_from_json(const json& j) {
  const auto shape = j.at("shape").get<std::vector<int>>();
  require(shape.size() == 3, ErrorCode::kShapeMismatch, "image shape must have 3 entries");
  const auto data = j.at("data").get<std::vector<double>>();
  return ImageTensor(j.value("id", std::string{}), shape[0], shape[1], shape[2],
                     Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size())));
}

json vector_to_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

namespace {

BackendDescriptor describe(StdioChannel& channel, BackendKind kind, json* raw = nullptr) {
  json r = channel.call("describe", json::object());
  if (raw) *raw = r;
  BackendDescriptor d;
  d.kind = kind;
  d.name = r.value("name", "process:" + channel.command());
  d.deterministic = r.value("deterministic", false);
  d.seed = r.value("seed", std::uint64_t{0});
  d.dimension = r.value("dimension", 0);
  return d;
}

}  // namespace

ProcessCaptioner::ProcessCaptioner(const std::string& command)
    : channel_(std::make_unique<StdioChannel>(command)), descriptor_(describe(*channel_, BackendKind::kCaptioner)) {}

std::string ProcessCaptioner::do_caption(const ImageTensor& image, int min_words, double repetition_penalty) const {
  return channel_
      ->call("caption", {{"image", image_to_json(image)}, {"min_words", min_words},
                         {"repetition_penalty", repetition_penalty}})
      .get<std::string>();
}

ProcessPerturber::ProcessPerturber(const std::string& command)
    : channel_(std::make_unique<StdioChannel>(command)), descriptor_(describe(*channel_, BackendKind::kPerturber)) {}

std::vector<std::string> ProcessPerturber::do_perturb(const std::string& caption, VariationFactor factor, int n) const {
  return channel_->call("perturb", {{"caption", caption}, {"factor", to_string(factor)}, {"n", n}})
      .get<std::vector<std::string>>();
}

ProcessSentenceEmbedder::ProcessSentenceEmbedder(const std::string& command)
    : channel_(std::make_unique<StdioChannel>(command)),
      descriptor_(describe(*channel_, BackendKind::kSentenceEmbedder)) {}

EmbeddingVector ProcessSentenceEmbedder::do_embed(const std::string& text) const {
  return {vector_from_json(channel_->call("embed", {{"text", text}}))};
}

ProcessJointEncoder::ProcessJointEncoder(const std::string& command)
    : channel_(std::make_unique<StdioChannel>(command)), descriptor_(describe(*channel_, BackendKind::kJointEncoder)) {}

EmbeddingVector ProcessJointEncoder::do_encode_image(const ImageTensor& image) const {
  return {vector_from_json(channel_->call("encode_image", {{"image", image_to_json(image)}}))};
}

EmbeddingVector ProcessJointEncoder::do_encode_text(const std::string& text) const {
  return {vector_from_json(channel_->call("encode_text", {{"text", text}}))};
}

ProcessGenerator::ProcessGenerator(const std::string& command) : channel_(std::make_unique<StdioChannel>(command)) {
  json raw;
  descriptor_ = describe(*channel_, BackendKind::kGenerator, &raw);
  max_steps_ = raw.value("max_steps", 0);
  latent_dim_ = raw.value("latent_dim", 0);
  require(max_steps_ >= 1 && latent_dim_ >= 1, ErrorCode::kBackendFailure,
          "generator adapter must report max_steps and latent_dim");
}

Eigen::VectorXd ProcessGenerator::vector_call(const std::string& op, const json& args) const {
  auto v = vector_from_json(channel_->call(op, args));
  require(v.size() > 0, ErrorCode::kBackendFailure, "generator op '" + op + "' returned an empty vector");
  return v;
}

LatentVector ProcessGenerator::encode(const ImageTensor& image) const {
  return {vector_call("encode", {{"image", image_to_json(image)}}), 0};
}

ImageTensor ProcessGenerator::decode(const LatentVector& latent, const std::string& id) const {
  auto img = image_from_json(channel_->call("decode", {{"latent", vector_to_json(latent.data)}, {"id", id}}));
  img.set_id(id);
  return img;
}

EmbeddingVector ProcessGenerator::embed_text(const std::string& text) const {
  return {vector_call("embed_text", {{"text", text}})};
}

EmbeddingVector ProcessGenerator::null_embedding() const { return {vector_call("null_embedding", json::object())}; }

Eigen::VectorXd ProcessGenerator::do_denoise_step(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                                                  const Eigen::VectorXd& null, double guidance_scale) const {
  return vector_call("denoise_step", {{"z", vector_to_json(z)}, {"k", k}, {"text", vector_to_json(text)},
                                      {"null", vector_to_json(null)}, {"guidance_scale", guidance_scale}});
}

Eigen::VectorXd ProcessGenerator::do_invert_step(const Eigen::VectorXd& z_prev, int k,
                                                 const Eigen::VectorXd& text) const {
  return vector_call("invert_step", {{"z", vector_to_json(z_prev)}, {"k", k}, {"text", vector_to_json(text)}});
}

Eigen::VectorXd ProcessGenerator::do_null_vjp(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                                              const Eigen::VectorXd& null, double guidance_scale,
                                              const Eigen::VectorXd& upstream) const {
  return vector_call("null_vjp", {{"z", vector_to_json(z)}, {"k", k}, {"text", vector_to_json(text)},
                                  {"null", vector_to_json(null)}, {"guidance_scale", guidance_scale},
                                  {"vector", vector_to_json(upstream)}});
}

Eigen::VectorXd ProcessGenerator::do_null_jvp(const Eigen::VectorXd& z, int k, const Eigen::VectorXd& text,
                                              const Eigen::VectorXd& null, double guidance_scale,
                                              const Eigen::VectorXd& direction) const {
  return vector_call("null_jvp", {{"z", vector_to_json(z)}, {"k", k}, {"text", vector_to_json(text)},
                                  {"null", vector_to_json(null)}, {"guidance_scale", guidance_scale},
                                  {"vector", vector_to_json(direction)}});
}

ProcessClassifier::ProcessClassifier(const std::string& command) : channel_(std::make_unique<StdioChannel>(command)) {
  json raw;
  descriptor_ = describe(*channel_, BackendKind::kClassifier, &raw);
  class_names_ = raw.value("class_names", std::vector<std::string>{});
}

ScoreVector ProcessClassifier::do_classify(const ImageTensor& image) const {
  json r = channel_->call("classify", {{"image", image_to_json(image)}});
  return {r.at("scores").get<std::vector<double>>(), class_names_};
}

// ---------------------------------------------------------------- server side

namespace {

json describe_json(const BackendDescriptor& d) {
  return {{"name", d.name}, {"deterministic", d.deterministic}, {"seed", d.seed}, {"dimension", d.dimension}};
}

json handle(const BackendSet& set, BackendKind kind, const std::string& op, const json& args) {
  switch (kind) {
    case BackendKind::kCaptioner: {
      require(set.captioner != nullptr, ErrorCode::kConfig, "no captioner to serve");
      if (op == "describe") return describe_json(set.captioner->descriptor());
      if (op == "caption")
        return set.captioner->caption(image_from_json(args.at("image")), args.at("min_words").get<int>(),
                                      args.at("repetition_penalty").get<double>());
      break;
    }
    case BackendKind::kPerturber: {
      require(set.perturber != nullptr, ErrorCode::kConfig, "no perturber to serve");
      if (op == "describe") return describe_json(set.perturber->descriptor());
      if (op == "perturb")
        return set.perturber->perturb(args.at("caption").get<std::string>(),
                                      factor_from_string(args.at("factor").get<std::string>()),
                                      args.at("n").get<int>());
      break;
    }
    case BackendKind::kSentenceEmbedder: {
      require(set.sentence_embedder != nullptr, ErrorCode::kConfig, "no sentence embedder to serve");
      if (op == "describe") return describe_json(set.sentence_embedder->descriptor());
      if (op == "embed") return vector_to_json(set.sentence_embedder->embed(args.at("text").get<std::string>()).data);
      break;
    }
    case BackendKind::kJointEncoder: {
      require(set.joint_encoder != nullptr, ErrorCode::kConfig, "no joint encoder to serve");
      if (op == "describe") return describe_json(set.joint_encoder->descriptor());
      if (op == "encode_image")
        return vector_to_json(set.joint_encoder->encode_image(image_from_json(args.at("image"))).data);
      if (op == "encode_text")
        return vector_to_json(set.joint_encoder->encode_text(args.at("text").get<std::string>()).data);
      break;
    }
    case BackendKind::kGenerator: {
      const auto& g = set.generator;
      require(g != nullptr, ErrorCode::kConfig, "no generator to serve");
      if (op == "describe") {
        json d = describe_json(g->descriptor());
        d["max_steps"] = g->max_steps();
        d["latent_dim"] = g->latent_dim();
        return d;
      }
      if (op == "encode") return vector_to_json(g->encode(image_from_json(args.at("image"))).data);
      if (op == "decode")
        return image_to_json(g->decode({vector_from_json(args.at("latent")), 0}, args.value("id", std::string{})));
      if (op == "embed_text") return vector_to_json(g->embed_text(args.at("text").get<std::string>()).data);
      if (op == "null_embedding") return vector_to_json(g->null_embedding().data);
      const int k = args.value("k", 0);
      const EmbeddingVector text{vector_from_json(args.at("text"))};
      if (op == "invert_step") return vector_to_json(g->invert_step({vector_from_json(args.at("z")), k - 1}, k, text).data);
      const LatentVector z{vector_from_json(args.at("z")), k};
      const EmbeddingVector null{vector_from_json(args.at("null"))};
      const double guidance = args.at("guidance_scale").get<double>();
      if (op == "denoise_step") return vector_to_json(g->denoise_step(z, k, text, null, guidance).data);
      if (op == "null_vjp") return vector_to_json(g->null_vjp(z, k, text, null, guidance, vector_from_json(args.at("vector"))));
      if (op == "null_jvp") return vector_to_json(g->null_jvp(z, k, text, null, guidance, vector_from_json(args.at("vector"))));
      break;
    }
    case BackendKind::kClassifier: {
      require(set.classifier != nullptr, ErrorCode::kConfig, "no classifier to serve");
      if (op == "describe") {
        json d = describe_json(set.classifier->descriptor());
        d["class_names"] = set.classifier->class_names();
        return d;
      }
      if (op == "classify") {
        auto s = set.classifier->classify(image_from_json(args.at("image")));
        return {{"scores", s.scores}, {"class_names", s.class_names}};
      }
      break;
    }
  }
  fail(ErrorCode::kInvalidArgument, "unsupported op '" + op + "' for " + to_string(kind));
}

}  // namespace

std::size_t serve_stdio(const BackendSet& set, BackendKind kind, std::istream& in, std::ostream& out) {
  std::size_t handled = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    json response;
    try {
      const json request = json::parse(line);
      response = {{"ok", true},
                  {"result", handle(set, kind, request.at("op").get<std::string>(),
                                    request.value("args", json::object()))}};
    } catch (const std::exception& e) {
      response = {{"ok", false}, {"error", e.what()}};
    }
    out << response.dump() << "\n" << std::flush;
    ++handled;
  }
  return handled;
}

}  // namespace cfr
