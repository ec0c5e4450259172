#include "lab/wire.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cmath>

#include "lab/activation_store.hpp"
#include "lab/encoding.hpp"
#include "lab/error.hpp"

namespace lab {

using nlohmann::json;

namespace wire {
namespace {

std::string_view position_mode_name(PositionMode m) {
    switch (m) {
        case PositionMode::last_token: return "last_token";
        case PositionMode::all: return "all";
        case PositionMode::spans: return "spans";
    }
    return "last_token";
}

json offsets_to_json(const std::vector<CharSpan>& offsets) {
    json out = json::array();
    for (const auto& o : offsets) out.push_back({o.begin, o.end});
    return out;
}

std::vector<CharSpan> offsets_from_json(const json& j) {
    std::vector<CharSpan> out;
    for (const auto& o : j) out.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>()});
    return out;
}

}  // namespace

json capture_spec_to_json(const CaptureSpec& spec) {
    json j = {{"positions", position_mode_name(spec.positions)},
              {"capture_attention", spec.capture_attention},
              {"capture_logits", spec.capture_logits},
              {"layers", spec.layers}};
    if (spec.positions == PositionMode::spans) j["spans"] = offsets_to_json(spec.spans);
    return j;
}

CaptureSpec capture_spec_from_json(const json& j) {
    CaptureSpec spec;
    const std::string mode = j.value("positions", std::string("last_token"));
    if (mode == "last_token") {
        spec.positions = PositionMode::last_token;
    } else if (mode == "all") {
        spec.positions = PositionMode::all;
    } else if (mode == "spans") {
        spec.positions = PositionMode::spans;
        spec.spans = offsets_from_json(j.at("spans"));
    } else {
        throw Error("unknown position mode '" + mode + "'");
    }
    spec.capture_attention = j.value("capture_attention", false);
    spec.capture_logits = j.value("capture_logits", false);
    if (j.contains("layers")) spec.layers = j.at("layers").get<std::vector<int>>();
    return spec;
}

json capture_to_json(const ModelInfo& info, const CaptureResult& c) {
    json header = {{"model", to_json(info)},
                   {"dtype", "f32le"},
                   {"shape", {c.layers.size(), c.positions.size(), c.hidden_dim}},
                   {"axes", {"layer", "position", "hidden"}},
                   {"layers", c.layers},
                   {"positions", c.positions},
                   {"token_ids", c.tokens.ids},
                   {"token_offsets", offsets_to_json(c.tokens.offsets)}};
    json out = {{"header", header}, {"payload", encode_f32(c.residuals)}};
    if (c.logits) out["logits"] = encode_f32(*c.logits);
    if (c.attention) {
        std::vector<float> flat;
        const std::size_t width = c.attention->empty() ? 0 : c.attention->front().size();
        for (const auto& row : *c.attention) flat.insert(flat.end(), row.begin(), row.end());
        out["attention"] = {{"shape", {c.attention->size(), width}}, {"payload", encode_f32(flat)}};
    }
    return out;
}

CaptureResult capture_from_json(const json& j) {
    CaptureResult c;
    const json& h = j.at("header");
    if (h.at("dtype").get<std::string>() != "f32le") throw Error("capture: unsupported dtype");
    const auto shape = h.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw Error("capture: expected a 3-axis shape");
    c.layers = h.at("layers").get<std::vector<int>>();
    c.positions = h.at("positions").get<std::vector<int>>();
    c.hidden_dim = static_cast<int>(shape[2]);
    c.tokens.ids = h.at("token_ids").get<std::vector<int>>();
    c.tokens.offsets = offsets_from_json(h.at("token_offsets"));
    c.residuals = decode_f32(j.at("payload").get<std::string>());
    if (shape[0] != c.layers.size() || shape[1] != c.positions.size() ||
        c.residuals.size() != shape[0] * shape[1] * shape[2]) {
        throw Error("capture: payload disagrees with header shape");
    }
    if (j.contains("logits")) c.logits = decode_f32(j.at("logits").get<std::string>());
    if (j.contains("attention")) {
        const auto a_shape = j.at("attention").at("shape").get<std::vector<std::size_t>>();
        const auto flat = decode_f32(j.at("attention").at("payload").get<std::string>());
        if (a_shape.size() != 2 || flat.size() != a_shape[0] * a_shape[1]) throw Error("capture: bad attention shape");
        std::vector<std::vector<float>> rows;
        for (std::size_t r = 0; r < a_shape[0]; ++r) {
            rows.emplace_back(flat.begin() + static_cast<std::ptrdiff_t>(r * a_shape[1]),
                              flat.begin() + static_cast<std::ptrdiff_t>((r + 1) * a_shape[1]));
        }
        c.attention = std::move(rows);
    }
    return c;
}

json generation_to_json(const GenerationResult& g) {
    return {{"tokens", g.tokens}, {"token_texts", g.token_texts}, {"text", g.text}, {"logits", encode_f32(g.logits)}};
}

GenerationResult generation_from_json(const json& j) {
    GenerationResult g;
    g.tokens = j.at("tokens").get<std::vector<int>>();
    g.token_texts = j.value("token_texts", std::vector<std::string>{});
    g.text = j.at("text").get<std::string>();
    if (j.contains("logits") && !j.at("logits").is_null()) g.logits = decode_f32(j.at("logits").get<std::string>());
    return g;
}

json head_chunk_to_json(const HeadWeights& head, int start, int count) {
    if (start < 0 || count < 0 || start > head.vocab) throw Error("head: chunk out of range");
    count = std::min(count, head.vocab - start);
    const auto d = static_cast<std::size_t>(head.hidden);
    const std::span<const float> rows(head.weight.data() + static_cast<std::size_t>(start) * d, static_cast<std::size_t>(count) * d);
    const auto bytes = f32le_bytes(rows);
    std::string kind = "none";
    if (head.norm.kind == NormParams::Kind::layernorm) kind = "layernorm";
    if (head.norm.kind == NormParams::Kind::rmsnorm) kind = "rmsnorm";
    json out = {{"vocab", head.vocab},
                {"hidden", head.hidden},
                {"start", start},
                {"count", count},
                {"weight", base64_encode(bytes)},
                {"sha256", sha256_hex(bytes)},
                {"norm", {{"kind", kind}, {"gain", encode_f32(head.norm.gain)}, {"bias", encode_f32(head.norm.bias)}, {"eps", head.norm.eps}}}};
    out["bias"] = head.bias.empty() ? json(nullptr) : json(encode_f32(head.bias));
    return out;
}

}  // namespace wire

// ---------------------------------------------------------------------------

struct WireServer::Impl {
    Runner& runner;
    httplib::Server server;
    explicit Impl(Runner& r) : runner(r) {}
};

namespace {

void reply(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

template <class F>
auto guarded(F handler) {
    return [handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(req, res);
        } catch (const json::exception& e) {
            reply(res, {{"error", std::string("malformed request: ") + e.what()}}, 400);
        } catch (const std::exception& e) {
            reply(res, {{"error", e.what()}}, 400);
        }
    };
}

}  // namespace

WireServer::WireServer(Runner& runner) : impl_(std::make_unique<Impl>(runner)) {
    auto& svr = impl_->server;
    Runner& r = impl_->runner;

    svr.Get("/info", guarded([&r](const httplib::Request&, httplib::Response& res) { reply(res, to_json(r.info())); }));

    svr.Post("/tokenize", guarded([&r](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const Tokenization t = r.tokenize(body.at("text").get<std::string>());
        json offsets = json::array();
        for (const auto& o : t.offsets) offsets.push_back({o.begin, o.end});
        reply(res, {{"ids", t.ids}, {"offsets", offsets}});
    }));

    svr.Post("/decode", guarded([&r](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const auto ids = body.at("ids").get<std::vector<int>>();
        reply(res, {{"text", r.decode(ids)}});
    }));

    svr.Post("/capture", guarded([&r](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        const CaptureSpec spec = wire::capture_spec_from_json(body.value("spec", json::object()));
        const CaptureResult c = r.forward_capture(body.at("text").get<std::string>(), spec);
        reply(res, wire::capture_to_json(r.info(), c));
    }));

    svr.Post("/patch", guarded([&r](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        PatchSpec patch;
        patch.layer = body.at("layer").get<int>();
        if (body.contains("position") && !body.at("position").is_null()) patch.position = body.at("position").get<int>();
        patch.replacement = decode_f32(body.at("replacement").get<std::string>());
        patch.max_new_tokens = body.value("max_new_tokens", 1);
        reply(res, wire::generation_to_json(r.forward_patched(body.at("text").get<std::string>(), patch)));
    }));

    svr.Post("/generate", guarded([&r](const httplib::Request& req, httplib::Response& res) {
        const json body = json::parse(req.body);
        reply(res, wire::generation_to_json(r.generate(body.at("text").get<std::string>(), body.value("max_new_tokens", 1))));
    }));

    svr.Get("/head", [&r](const httplib::Request& req, httplib::Response& res) {
        const HeadWeights* head = nullptr;
        try {
            head = &r.head();
        } catch (const std::exception& e) {
            reply(res, {{"error", std::string("head unavailable: ") + e.what()}}, 501);
            return;
        }
        try {
            const int start = req.has_param("start") ? std::stoi(req.get_param_value("start")) : 0;
            const int count = req.has_param("count") ? std::stoi(req.get_param_value("count")) : head->vocab;
            reply(res, wire::head_chunk_to_json(*head, start, count));
        } catch (const std::exception& e) {
            reply(res, {{"error", e.what()}}, 400);
        }
    });
}

WireServer::~WireServer() { stop(); }

int WireServer::bind(const std::string& host, int port) {
    auto& svr = impl_->server;
    if (port == 0) {
        const int bound = svr.bind_to_any_port(host);
        if (bound <= 0) throw Error("cannot bind " + host);
        return bound;
    }
    if (!svr.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void WireServer::serve() { impl_->server.listen_after_bind(); }

void WireServer::stop() {
    if (impl_) impl_->server.stop();
}

// ---------------------------------------------------------------------------

struct HttpRunner::Impl {
    httplib::Client client;
    explicit Impl(const std::string& url) : client(url) {
        client.set_connection_timeout(10);
        client.set_read_timeout(600);
        client.set_write_timeout(600);
    }
};

HttpRunner::HttpRunner(const std::string& url, int head_chunk_rows)
    : impl_(std::make_unique<Impl>(url)), head_chunk_rows_(head_chunk_rows) {
    if (head_chunk_rows_ < 1) throw Error("head chunk size must be >= 1");
    info_ = model_info_from_json(get("/info"));
}

HttpRunner::~HttpRunner() = default;

namespace {

json parse_response(const httplib::Result& result, const std::string& path) {
    if (!result) throw Error("backend unreachable (" + path + "): " + httplib::to_string(result.error()));
    json body;
    try {
        body = json::parse(result->body);
    } catch (const json::exception&) {
        throw Error("backend returned non-JSON for " + path + " (status " + std::to_string(result->status) + ")");
    }
    if (result->status != 200) {
        throw Error("backend error on " + path + " (status " + std::to_string(result->status) + "): " +
                    body.value("error", std::string("unknown")));
    }
    return body;
}

}  // namespace

json HttpRunner::get(const std::string& path) const {
    std::lock_guard lock(mutex_);
    return parse_response(impl_->client.Get(path), path);
}

json HttpRunner::post(const std::string& path, const json& body) const {
    std::lock_guard lock(mutex_);
    return parse_response(impl_->client.Post(path, body.dump(), "application/json"), path);
}

Tokenization HttpRunner::tokenize(std::string_view text) const {
    const json j = post("/tokenize", {{"text", text}});
    Tokenization t;
    t.ids = j.at("ids").get<std::vector<int>>();
    for (const auto& o : j.at("offsets")) t.offsets.push_back({o.at(0).get<std::size_t>(), o.at(1).get<std::size_t>()});
    if (t.ids.size() != t.offsets.size()) throw Error("tokenize: ids and offsets disagree");
    return t;
}

std::string HttpRunner::decode(std::span<const int> ids) const {
    return post("/decode", {{"ids", std::vector<int>(ids.begin(), ids.end())}}).at("text").get<std::string>();
}

CaptureResult HttpRunner::forward_capture(std::string_view text, const CaptureSpec& spec) {
    return wire::capture_from_json(post("/capture", {{"text", text}, {"spec", wire::capture_spec_to_json(spec)}}));
}

GenerationResult HttpRunner::forward_patched(std::string_view text, const PatchSpec& patch) {
    json body = {{"text", text},
                 {"layer", patch.layer},
                 {"replacement", encode_f32(patch.replacement)},
                 {"max_new_tokens", patch.max_new_tokens}};
    body["position"] = patch.position ? json(*patch.position) : json(nullptr);
    return wire::generation_from_json(post("/patch", body));
}

GenerationResult HttpRunner::generate(std::string_view text, int max_new_tokens) {
    return wire::generation_from_json(post("/generate", {{"text", text}, {"max_new_tokens", max_new_tokens}}));
}

const HeadWeights& HttpRunner::head() {
    if (head_) return *head_;
    HeadWeights h;
    for (int start = 0;; start += head_chunk_rows_) {
        const json j = get("/head?start=" + std::to_string(start) + "&count=" + std::to_string(head_chunk_rows_));
        const auto bytes = base64_decode(j.at("weight").get<std::string>());
        if (sha256_hex(bytes) != j.at("sha256").get<std::string>()) {
            throw Error("head chunk at row " + std::to_string(start) + " failed checksum verification");
        }
        const auto rows = f32le_values(bytes);
        if (start == 0) {
            h.vocab = j.at("vocab").get<int>();
            h.hidden = j.at("hidden").get<int>();
            const json& n = j.at("norm");
            const std::string kind = n.at("kind").get<std::string>();
            h.norm.kind = kind == "layernorm" ? NormParams::Kind::layernorm
                          : kind == "rmsnorm" ? NormParams::Kind::rmsnorm
                                              : NormParams::Kind::none;
            h.norm.gain = decode_f32(n.at("gain").get<std::string>());
            h.norm.bias = decode_f32(n.at("bias").get<std::string>());
            h.norm.eps = n.at("eps").get<float>();
            if (!j.at("bias").is_null()) h.bias = decode_f32(j.at("bias").get<std::string>());
        }
        h.weight.insert(h.weight.end(), rows.begin(), rows.end());
        const int count = j.at("count").get<int>();
        if (count == 0 || start + count >= h.vocab) break;
    }
    if (h.weight.size() != static_cast<std::size_t>(h.vocab) * static_cast<std::size_t>(h.hidden)) {
        throw Error("head download incomplete");
    }
    head_ = std::move(h);
    return *head_;
}

// ---------------------------------------------------------------------------

std::vector<ConformanceCheck> run_conformance(Runner& runner, double logit_tolerance) {
    std::vector<ConformanceCheck> checks;
    auto record = [&](std::string name, auto&& body) {
        ConformanceCheck c{std::move(name), false, ""};
        try {
            c.detail = body();
            c.passed = c.detail.empty();
        } catch (const std::exception& e) {
            c.detail = e.what();
        }
        checks.push_back(std::move(c));
    };

    const std::string text = "The atomic number of Mg is ";
    const ModelInfo info = runner.info();

    record("info_shapes", [&]() -> std::string {
        validate(info);
        const CaptureResult c = runner.forward_capture(text, CaptureSpec{});
        if (c.layers.size() != static_cast<std::size_t>(info.layer_count + 1)) return "capture layer count != L+1";
        if (c.positions.size() != 1) return "last_token capture returned several positions";
        if (c.hidden_dim != info.hidden_dim) return "capture hidden_dim != /info hidden_dim";
        if (c.residuals.size() != c.layers.size() * static_cast<std::size_t>(info.hidden_dim)) return "payload size mismatch";
        return {};
    });

    record("offset_partition", [&]() -> std::string {
        const Tokenization t = runner.tokenize(text);
        if (t.ids.empty()) return "no tokens";
        std::vector<bool> covered(text.size(), false);
        std::size_t prev_end = 0;
        for (const auto& o : t.offsets) {
            if (o.begin < prev_end || o.end > text.size() || o.begin > o.end) return "offsets out of order or out of range";
            for (std::size_t k = o.begin; k < o.end; ++k) covered[k] = true;
            prev_end = o.end;
        }
        for (std::size_t k = 0; k < text.size(); ++k) {
            if (!covered[k] && !std::isspace(static_cast<unsigned char>(text[k]))) return "character not covered by any token";
        }
        return {};
    });

    record("noop_patch", [&]() -> std::string {
        if (!info.supports_patching) return "backend does not support patching";
        const int layer = info.layer_count / 2;
        CaptureSpec spec;
        spec.layers = {layer};
        const CaptureResult c = runner.forward_capture(text, spec);
        PatchSpec patch;
        patch.layer = layer;
        patch.replacement.assign(c.last(layer).begin(), c.last(layer).end());
        patch.max_new_tokens = 3;
        const GenerationResult patched = runner.forward_patched(text, patch);
        const GenerationResult plain = runner.generate(text, 3);
        if (patched.tokens != plain.tokens) return "patched generation differs from unpatched";
        return {};
    });

    record("head_logits", [&]() -> std::string {
        CaptureSpec spec;
        spec.capture_logits = true;
        spec.layers = {info.layer_count};
        const CaptureResult c = runner.forward_capture(text, spec);
        if (!c.logits) return "backend returned no logits";
        const auto local = runner.unembed(c.last(info.layer_count), true);
        if (local.size() != c.logits->size()) return "vocabulary size mismatch";
        double worst = 0.0;
        for (std::size_t v = 0; v < local.size(); ++v) worst = std::max(worst, std::abs(double(local[v]) - (*c.logits)[v]));
        if (worst > logit_tolerance) return "max logit difference " + std::to_string(worst);
        return {};
    });

    return checks;
}

}  // namespace lab
