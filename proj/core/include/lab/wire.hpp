#pragma once

#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lab/runner.hpp"

namespace lab {

/// HTTP wire protocol for model backends. All tensors travel as base64
/// encoded little-endian float32, row-major.
///
///   GET  /info                      ModelInfo
///   POST /tokenize {text}           {ids, offsets: [[begin, end], ...]}
///   POST /decode   {ids}            {text}
///   POST /capture  {text, spec}     {header, payload, logits?, attention?}
///   POST /patch    {text, layer, position?, replacement, max_new_tokens}
///                                   {tokens, token_texts, text, logits}
///   POST /generate {text, max_new_tokens}   same shape as /patch
///   GET  /head?start=&count=        vocabulary head rows with sha256 per chunk
///
/// Failures answer with a non-200 status and {"error": message}.
namespace wire {

nlohmann::json capture_spec_to_json(const CaptureSpec& spec);
CaptureSpec capture_spec_from_json(const nlohmann::json& j);

nlohmann::json capture_to_json(const ModelInfo& info, const CaptureResult& capture);
CaptureResult capture_from_json(const nlohmann::json& j);

nlohmann::json generation_to_json(const GenerationResult& g);
GenerationResult generation_from_json(const nlohmann::json& j);

/// Rows [start, start + count) of the head, plus norm parameters and bias.
nlohmann::json head_chunk_to_json(const HeadWeights& head, int start, int count);

}  // namespace wire

/// Serves a Runner over the wire protocol. Requests are handled one at a
/// time by the runner's own serialisation.
class WireServer {
  public:
    explicit WireServer(Runner& runner);
    ~WireServer();
    WireServer(const WireServer&) = delete;
    WireServer& operator=(const WireServer&) = delete;

    /// Binds and returns the port (an ephemeral one when `port` is 0).
    int bind(const std::string& host, int port);
    /// Blocks until stop() is called.
    void serve();
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Runner implemented by a remote backend that speaks the wire protocol.
class HttpRunner final : public Runner {
  public:
    /// `url` like "http://127.0.0.1:8080". Fetches /info immediately and
    /// throws when the backend is unreachable.
    explicit HttpRunner(const std::string& url, int head_chunk_rows = 4096);
    ~HttpRunner() override;

    ModelInfo info() const override { return info_; }
    Tokenization tokenize(std::string_view text) const override;
    std::string decode(std::span<const int> ids) const override;
    CaptureResult forward_capture(std::string_view text, const CaptureSpec& spec) override;
    GenerationResult forward_patched(std::string_view text, const PatchSpec& patch) override;
    GenerationResult generate(std::string_view text, int max_new_tokens) override;
    /// Downloads the head in chunks, verifying each chunk's checksum.
    const HeadWeights& head() override;
    using Runner::forward_capture;

  private:
    nlohmann::json get(const std::string& path) const;
    nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

    struct Impl;
    std::unique_ptr<Impl> impl_;
    ModelInfo info_;
    int head_chunk_rows_;
    std::optional<HeadWeights> head_;
    mutable std::mutex mutex_;
};

struct ConformanceCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

/// Protocol checks shared by every backend: capture shapes agree with
/// /info, token offsets are ordered and cover every non-space character,
/// patching a captured vector back at its own site leaves generation
/// unchanged, and logits recomputed from the exported head agree with the
/// backend within `logit_tolerance`.
std::vector<ConformanceCheck> run_conformance(Runner& runner, double logit_tolerance = 1e-3);

}  // namespace lab
