#pragma once

// Run configuration: typed key schemas per subcommand, INI / JSON loading,
// `--set section.key=value` overrides and canonical value strings.
//
// Every key is "section.key". A resolved config holds one canonical string per
// schema key, so the same settings always serialize (and hash) identically.

#include "steadynorm/errors.hpp"
#include "steadynorm/simulate.hpp"
#include "steadynorm/steady.hpp"
#include "steadynorm/train.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/uuid/detail/sha1.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace steadynorm::cli {

using Json = nlohmann::ordered_json;

enum class ValueKind { Real, Int, Bool, Text, Choice, IntList, RealList, TextList };

struct KeySpec {
    std::string key;
    ValueKind kind;
    std::string fallback;
    std::vector<std::string> choices = {};
};

using Schema = std::vector<KeySpec>;
using Resolved = std::map<std::string, std::string>;
using RawConfig = std::vector<std::pair<std::string, std::string>>;

// ---------------------------------------------------------------------------
// values

/// Shortest decimal string that round-trips to the same double.
inline std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    if (trim(s).empty()) return out;
    std::size_t start = 0;
    while (true) {
        const auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos - start)));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

inline double parse_real(std::string_view key, const std::string& v) {
    double x = 0.0;
    const std::string t = trim(v);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(x)) {
        throw ConfigError("config: '" + std::string(key) + "' expects a finite number, got '" + v + "'");
    }
    return x;
}

inline std::int64_t parse_int(std::string_view key, const std::string& v) {
    std::int64_t x = 0;
    std::string t = trim(v);
    const auto res = std::from_chars(t.data(), t.data() + t.size(), x);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        // Accept integral reals such as "1e3" or "2000.0" (JSON numbers).
        double d = 0.0;
        const auto rd = std::from_chars(t.data(), t.data() + t.size(), d);
        if (!t.empty() && rd.ec == std::errc() && rd.ptr == t.data() + t.size() && std::isfinite(d) &&
            d == std::floor(d) && std::abs(d) < 9.0e15) {
            return static_cast<std::int64_t>(d);
        }
        throw ConfigError("config: '" + std::string(key) + "' expects an integer, got '" + v + "'");
    }
    return x;
}

inline bool parse_bool(std::string_view key, const std::string& v) {
    std::string t = trim(v);
    std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw ConfigError("config: '" + std::string(key) + "' expects true/false, got '" + v + "'");
}

inline std::string join(const std::vector<std::string>& xs, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += sep;
        out += xs[i];
    }
    return out;
}

inline std::string canonical(const KeySpec& spec, const std::string& raw) {
    switch (spec.kind) {
        case ValueKind::Real: return format_number(parse_real(spec.key, raw));
        case ValueKind::Int: return std::to_string(parse_int(spec.key, raw));
        case ValueKind::Bool: return parse_bool(spec.key, raw) ? "true" : "false";
        case ValueKind::Text: return trim(raw);
        case ValueKind::Choice: {
            const std::string t = trim(raw);
            if (std::find(spec.choices.begin(), spec.choices.end(), t) == spec.choices.end()) {
                throw ConfigError("config: '" + spec.key + "' must be one of {" + join(spec.choices, ", ") +
                                  "}, got '" + raw + "'");
            }
            return t;
        }
        case ValueKind::IntList:
        case ValueKind::RealList:
        case ValueKind::TextList: {
            std::vector<std::string> items;
            for (const auto& item : split(raw, ',')) {
                if (item.empty()) throw ConfigError("config: '" + spec.key + "' has an empty list item");
                if (spec.kind == ValueKind::IntList) {
                    items.push_back(std::to_string(parse_int(spec.key, item)));
                } else if (spec.kind == ValueKind::RealList) {
                    items.push_back(format_number(parse_real(spec.key, item)));
                } else {
                    items.push_back(item);
                }
            }
            return join(items, ",");
        }
    }
    return raw;
}

// ---------------------------------------------------------------------------
// schemas

namespace keys {

inline std::vector<std::string> names(std::initializer_list<std::string_view> xs) {
    return {xs.begin(), xs.end()};
}

inline Schema schedule(std::string steps, std::string warmup, std::string gamma, std::string shape,
                       std::string c_sq0) {
    return {
        {"schedule.total_steps", ValueKind::Int, std::move(steps)},
        {"schedule.warmup_steps", ValueKind::Int, std::move(warmup)},
        {"schedule.gamma_peak", ValueKind::Real, std::move(gamma)},
        {"schedule.gamma_shape", ValueKind::Choice, std::move(shape), names({"constant", "cosine"})},
        {"schedule.alpha_kind", ValueKind::Choice, "constant", names({"constant", "linear", "synthesized"})},
        {"schedule.alpha0", ValueKind::Real, "0.1"},
        {"schedule.alpha1", ValueKind::Real, "0.1"},
        {"schedule.alpha_max", ValueKind::Real, "1"},
        {"schedule.post_clamp", ValueKind::Choice, "freeze", names({"freeze", "resume"})},
        {"schedule.matching", ValueKind::Choice, "effective_lr", names({"effective_lr", "erroneous"})},
        {"schedule.c_sq_shape", ValueKind::Choice, "constant", names({"constant", "cosine"})},
        {"schedule.c_sq0", ValueKind::Real, std::move(c_sq0)},
        {"schedule.c_sq_final", ValueKind::Real, "1"},
    };
}

}  // namespace keys

/// Defaults reproduce the reference random-walk setup: per-element steady
/// variance γ/(2λ) = 1/2000 at dim 1000, 10 half-lives, averaged over 8 seeds.
inline Schema simulate_schema() {
    Schema s{
        {"sim.dim", ValueKind::Int, "1000"},
        {"sim.update", ValueKind::Choice, "gaussian_iid",
         keys::names({"gaussian_iid", "momentum_gaussian", "momentum_rms_normalized", "adam"})},
        {"sim.decay_kind", ValueKind::Choice, "lambda", keys::names({"lambda", "eta", "corrected", "scionc"})},
        {"sim.decay", ValueKind::Real, "1"},
        {"sim.beta1", ValueKind::Real, "0.9"},
        {"sim.beta2", ValueKind::Real, "0.999"},
        {"sim.adam_eps", ValueKind::Real, "1e-08"},
        {"sim.seed", ValueKind::Int, "0"},
        {"sim.seeds", ValueKind::Int, "8"},
        {"sim.measure_window", ValueKind::Real, "0.2"},
        {"sim.autocorr_lags", ValueKind::IntList, ""},
        {"sim.trace_stride", ValueKind::Int, "1"},
        {"sim.require_steady", ValueKind::Bool, "true"},
        {"sim.protocol", ValueKind::Choice, "half_life", keys::names({"explicit", "half_life"})},
        {"sim.half_lives", ValueKind::Real, "10"},
        {"sim.warmup_half_lives", ValueKind::Real, "0.5"},
    };
    const auto sched = keys::schedule("1000", "0", "0.001", "constant", "1");
    s.insert(s.end(), sched.begin(), sched.end());
    return s;
}

/// Defaults: a ScionC run of the toy classifier whose C² gives the same
/// initial λ (0.2) as the Scion default.
inline Schema train_schema() {
    Schema s{
        {"task.kind", ValueKind::Choice, "gaussian_blobs_classification",
         keys::names({"gaussian_blobs_classification", "linear_regression"})},
        {"task.input_dim", ValueKind::Int, "32"},
        {"task.num_classes", ValueKind::Int, "8"},
        {"task.samples", ValueKind::Int, "8192"},
        {"task.noise_scale", ValueKind::Real, "1"},
        {"task.separation", ValueKind::Real, "4"},
        {"task.seed", ValueKind::Int, "0"},
        {"model.hidden", ValueKind::IntList, "64"},
        {"model.activation_scale", ValueKind::Real, format_number(std::numbers::sqrt2)},
        {"model.init_scale", ValueKind::Real, "1"},
        {"model.output_bias_exempt", ValueKind::Bool, "false"},
        {"model.normalize_hidden", ValueKind::Bool, "false"},
        {"model.seed", ValueKind::Int, "0"},
        {"train.optimizer", ValueKind::Choice, "scionc",
         keys::names({"adamw", "adamc", "renorm-adamw", "scion", "scionc"})},
        {"train.batch_size", ValueKind::Int, "128"},
        {"train.log_every", ValueKind::Int, "50"},
        {"train.lambda", ValueKind::Real, "0.2"},
        {"train.output_gamma_scale", ValueKind::Real, "20"},
        {"train.output_lambda", ValueKind::Real, "0.004"},
        {"train.exempt_layers", ValueKind::TextList, ""},
        {"train.seed", ValueKind::Int, "0"},
        {"train.check_norm_law", ValueKind::Bool, "false"},
        {"train.track_validation", ValueKind::Bool, "true"},
        {"optim.beta1", ValueKind::Real, "0.9"},
        {"optim.beta2", ValueKind::Real, "0.999"},
        {"optim.eps", ValueKind::Real, "1e-08"},
        {"optim.eps_norm", ValueKind::Real, "1e-08"},
        {"optim.polar_iters", ValueKind::Int, "0"},
    };
    const auto sched = keys::schedule("1000", "50", "0.02", "cosine", "0.95");
    s.insert(s.end(), sched.begin(), sched.end());
    return s;
}

inline Schema sweep_keys() {
    return {
        {"sweep.run", ValueKind::Choice, "train", keys::names({"simulate", "train"})},
        {"sweep.seeds", ValueKind::IntList, "0,1,2"},
    };
}

inline Schema schema_for(std::string_view run) {
    if (run == "simulate") return simulate_schema();
    if (run == "train") return train_schema();
    throw ConfigError("config: unknown run kind '" + std::string(run) + "'");
}

inline const KeySpec* find_key(const Schema& s, std::string_view key) {
    for (const auto& k : s) {
        if (k.key == key) return &k;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// loading

namespace detail {

inline std::string json_scalar(const std::string& key, const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
    if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
    if (v.is_number_float()) return format_number(v.get<double>());
    throw ConfigError("config: '" + key + "' has an unsupported JSON value");
}

inline std::string json_value(const std::string& key, const nlohmann::json& v, char list_sep) {
    if (!v.is_array()) return json_scalar(key, v);
    std::vector<std::string> items;
    for (const auto& x : v) items.push_back(json_scalar(key, x));
    return join(items, std::string(1, list_sep));
}

}  // namespace detail

/// Flat (key, value) pairs from a JSON object of sections. A run manifest is
/// accepted as well: its "config" member is used.
inline RawConfig parse_json_config(const std::string& text, const std::string& origin) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: cannot parse " + origin + ": " + e.what());
    }
    if (doc.is_object() && doc.contains("config") && doc["config"].is_object()) doc = doc["config"];
    if (!doc.is_object()) throw ConfigError("config: " + origin + " must hold a JSON object");
    RawConfig out;
    for (const auto& [section, body] : doc.items()) {
        if (!body.is_object()) throw ConfigError("config: '" + section + "' must be a section object");
        for (const auto& [k, v] : body.items()) {
            const std::string key = section + "." + k;
            // Grid axes list alternative values; everything else lists items.
            out.emplace_back(key, detail::json_value(key, v, section == "grid" ? '|' : ','));
        }
    }
    return out;
}

inline RawConfig parse_ini_config(const std::string& text, const std::string& origin) {
    boost::property_tree::ptree tree;
    std::istringstream in(text);
    try {
        boost::property_tree::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config: cannot parse " + origin + ": " + e.message() + " (line " +
                          std::to_string(e.line()) + ")");
    }
    RawConfig out;
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty()) {
            throw ConfigError("config: key '" + section + "' in " + origin + " is outside any section");
        }
        for (const auto& [k, v] : body) out.emplace_back(section + "." + k, v.get_value<std::string>());
    }
    return out;
}

inline RawConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("config: cannot read '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    if (std::filesystem::path(path).extension() == ".json") return parse_json_config(ss.str(), path);
    return parse_ini_config(ss.str(), path);
}

/// "section.key=value" from a --set flag.
inline std::pair<std::string, std::string> parse_set(const std::string& s) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects section.key=value, got '" + s + "'");
    return {trim(s.substr(0, eq)), trim(s.substr(eq + 1))};
}

/// Defaults, then file entries, then overrides (later wins). Unknown keys are errors.
inline Resolved resolve(const Schema& schema, const RawConfig& file, const RawConfig& overrides) {
    Resolved r;
    for (const auto& k : schema) r[k.key] = k.fallback.empty() ? "" : canonical(k, k.fallback);
    for (const auto* src : {&file, &overrides}) {
        for (const auto& [key, value] : *src) {
            const KeySpec* spec = find_key(schema, key);
            if (!spec) throw ConfigError("config: unknown key '" + key + "'");
            r[key] = canonical(*spec, value);
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// typed access

inline const std::string& get(const Resolved& r, const std::string& key) {
    const auto it = r.find(key);
    if (it == r.end()) throw ConfigError("config: missing key '" + key + "'");
    return it->second;
}

inline double get_real(const Resolved& r, const std::string& key) { return parse_real(key, get(r, key)); }
inline std::int64_t get_int(const Resolved& r, const std::string& key) { return parse_int(key, get(r, key)); }
inline bool get_bool(const Resolved& r, const std::string& key) { return parse_bool(key, get(r, key)); }

inline std::size_t get_count(const Resolved& r, const std::string& key) {
    const auto v = get_int(r, key);
    if (v < 0) throw ConfigError("config: '" + key + "' must be >= 0");
    return static_cast<std::size_t>(v);
}

inline std::vector<std::int64_t> get_int_list(const Resolved& r, const std::string& key) {
    std::vector<std::int64_t> out;
    for (const auto& s : split(get(r, key), ',')) out.push_back(parse_int(key, s));
    return out;
}

inline std::vector<std::string> get_text_list(const Resolved& r, const std::string& key) {
    return split(get(r, key), ',');
}

// ---------------------------------------------------------------------------
// serialization and hashing

/// Git blob id of `content`: SHA-1 over "blob <size>\0" followed by the bytes.
inline std::string git_blob_sha1(const std::string& content) {
    boost::uuids::detail::sha1 h;
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    h.process_bytes(header.data(), header.size());
    h.process_bytes(content.data(), content.size());
    boost::uuids::detail::sha1::digest_type d;
    h.get_digest(d);
    char buf[41];
    for (int i = 0; i < 5; ++i) std::snprintf(buf + 8 * i, 9, "%08x", d[i]);
    return {buf, 40};
}

inline Json typed_value(const KeySpec& k, const std::string& v) {
    switch (k.kind) {
        case ValueKind::Real: return parse_real(k.key, v);
        case ValueKind::Int: return parse_int(k.key, v);
        case ValueKind::Bool: return parse_bool(k.key, v);
        case ValueKind::Text:
        case ValueKind::Choice: return v;
        case ValueKind::IntList: {
            Json a = Json::array();
            for (const auto& s : split(v, ',')) a.push_back(parse_int(k.key, s));
            return a;
        }
        case ValueKind::RealList: {
            Json a = Json::array();
            for (const auto& s : split(v, ',')) a.push_back(parse_real(k.key, s));
            return a;
        }
        case ValueKind::TextList: {
            Json a = Json::array();
            for (const auto& s : split(v, ',')) a.push_back(s);
            return a;
        }
    }
    return v;
}

/// {section: {key: typed value}} in schema order.
inline Json config_json(const Schema& schema, const Resolved& r) {
    Json out = Json::object();
    for (const auto& k : schema) {
        const auto dot = k.key.find('.');
        out[k.key.substr(0, dot)][k.key.substr(dot + 1)] = typed_value(k, get(r, k.key));
    }
    return out;
}

// ---------------------------------------------------------------------------
// builders

namespace detail {

template <class Fn>
auto as_config_error(Fn&& fn) {
    try {
        return fn();
    } catch (const DomainError& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
}

}  // namespace detail

inline ScheduleSet build_schedule(const Resolved& r) {
    ScheduleSet s;
    s.total_steps = get_int(r, "schedule.total_steps");
    s.warmup_steps = get_int(r, "schedule.warmup_steps");
    s.gamma_peak = get_real(r, "schedule.gamma_peak");
    s.gamma_shape = get(r, "schedule.gamma_shape") == "cosine" ? GammaShape::Cosine : GammaShape::Constant;
    const auto& ak = get(r, "schedule.alpha_kind");
    s.alpha.kind = ak == "linear" ? AlphaKind::Linear : ak == "synthesized" ? AlphaKind::Synthesized : AlphaKind::Constant;
    s.alpha.alpha0 = get_real(r, "schedule.alpha0");
    s.alpha.alpha1 = get_real(r, "schedule.alpha1");
    s.alpha.alpha_max = get_real(r, "schedule.alpha_max");
    s.alpha.post_clamp = get(r, "schedule.post_clamp") == "resume" ? PostClamp::Resume : PostClamp::Freeze;
    s.alpha.matching = get(r, "schedule.matching") == "erroneous" ? Matching::Erroneous : Matching::EffectiveLr;
    s.c_sq.shape = get(r, "schedule.c_sq_shape") == "cosine" ? CSqShape::Cosine : CSqShape::Constant;
    s.c_sq.c_sq0 = get_real(r, "schedule.c_sq0");
    s.c_sq.c_sq_final = get_real(r, "schedule.c_sq_final");
    return s;
}

struct SimSetup {
    SimConfig cfg;
    std::vector<std::uint64_t> seeds;
};

/// With protocol = half_life the step counts come from the peak decay rate:
/// ceil(half_lives·t½) steps of which round(warmup_half_lives·t½) warm up.
inline SimSetup build_simulation(const Resolved& r) {
    SimSetup s;
    SimConfig& c = s.cfg;
    c.dim = get_count(r, "sim.dim");
    c.update = *parse_update_kind(get(r, "sim.update"));
    c.decay_kind = *parse_decay_kind(get(r, "sim.decay_kind"));
    c.decay = get_real(r, "sim.decay");
    c.beta1 = get_real(r, "sim.beta1");
    c.beta2 = get_real(r, "sim.beta2");
    c.adam_eps = get_real(r, "sim.adam_eps");
    c.seed = static_cast<std::uint64_t>(get_int(r, "sim.seed"));
    c.measure_window = get_real(r, "sim.measure_window");
    c.autocorr_lags = get_int_list(r, "sim.autocorr_lags");
    c.trace_stride = get_int(r, "sim.trace_stride");
    c.require_steady = get_bool(r, "sim.require_steady");
    c.schedule = build_schedule(r);
    if (get(r, "sim.protocol") == "half_life") {
        const double eta = c.eta_at(c.schedule.gamma_peak, c.min_alpha());
        if (!(eta > 0.0 && eta < 1.0)) {
            throw ConfigError("config: the half_life protocol needs a peak decay rate in (0, 1)");
        }
        const double th = half_life(eta);
        const double hl = get_real(r, "sim.half_lives");
        const double wl = get_real(r, "sim.warmup_half_lives");
        if (!(hl > 0.0) || !(wl >= 0.0) || wl > hl) {
            throw ConfigError("config: half-life counts must satisfy 0 <= warmup_half_lives <= half_lives");
        }
        c.schedule.total_steps = static_cast<std::int64_t>(std::ceil(hl * th));
        c.schedule.warmup_steps = static_cast<std::int64_t>(std::llround(wl * th));
    }
    const auto n = get_count(r, "sim.seeds");
    if (n < 1) throw ConfigError("config: sim.seeds must be >= 1");
    s.seeds = seed_list(c.seed, n);
    c.validate();
    return s;
}

struct TrainSetup {
    SyntheticTask task;
    ModelSpec model;
    TrainConfig train;
};

inline TrainSetup build_training(const Resolved& r) {
    TrainSetup s;
    s.task.kind = *parse_task_kind(get(r, "task.kind"));
    s.task.input_dim = get_count(r, "task.input_dim");
    s.task.num_classes = get_count(r, "task.num_classes");
    s.task.samples = get_count(r, "task.samples");
    s.task.noise_scale = get_real(r, "task.noise_scale");
    s.task.separation = get_real(r, "task.separation");
    s.task.seed = static_cast<std::uint64_t>(get_int(r, "task.seed"));
    s.task.validate();

    s.model.input_dim = s.task.input_dim;
    s.model.output_dim = s.task.output_dim();
    s.model.hidden.clear();
    for (auto h : get_int_list(r, "model.hidden")) {
        if (h < 1) throw ConfigError("config: model.hidden widths must be >= 1");
        s.model.hidden.push_back(static_cast<std::size_t>(h));
    }
    s.model.activation_scale = get_real(r, "model.activation_scale");
    s.model.init_scale = get_real(r, "model.init_scale");
    s.model.output_bias_exempt = get_bool(r, "model.output_bias_exempt");
    s.model.normalize_hidden = get_bool(r, "model.normalize_hidden");
    s.model.seed = static_cast<std::uint64_t>(get_int(r, "model.seed"));
    s.model.validate();

    TrainConfig& t = s.train;
    t.optimizer = *parse_optimizer(get(r, "train.optimizer"));
    t.schedule = build_schedule(r);
    t.hp.beta1 = get_real(r, "optim.beta1");
    t.hp.beta2 = get_real(r, "optim.beta2");
    t.hp.eps = get_real(r, "optim.eps");
    t.hp.eps_norm = get_real(r, "optim.eps_norm");
    t.hp.polar_iters = static_cast<int>(get_int(r, "optim.polar_iters"));
    t.hp.alpha = t.schedule.alpha.alpha0;
    const auto batch = get_int(r, "train.batch_size");
    if (batch < 1) throw ConfigError("config: train.batch_size must be >= 1");
    t.batch_size = static_cast<std::size_t>(batch);
    t.log_every = get_int(r, "train.log_every");
    t.lambda = get_real(r, "train.lambda");
    t.output_gamma_scale = get_real(r, "train.output_gamma_scale");
    t.output_lambda = get_real(r, "train.output_lambda");
    t.exempt_layers = get_text_list(r, "train.exempt_layers");
    t.seed = static_cast<std::uint64_t>(get_int(r, "train.seed"));
    t.check_norm_law = get_bool(r, "train.check_norm_law");
    t.track_validation = get_bool(r, "train.track_validation");
    t.validate();
    const auto names = [&] {
        std::vector<std::string> n;
        for (const auto& p : make_toy_model(s.model).params) n.push_back(p.name);
        return n;
    }();
    for (const auto& e : t.exempt_layers) {
        if (std::find(names.begin(), names.end(), e) == names.end()) {
            throw ConfigError("config: unknown layer '" + e + "' in train.exempt_layers");
        }
    }
    return s;
}

/// Fully validates a resolved config for the given run kind.
inline void validate_run(std::string_view run, const Resolved& r) {
    detail::as_config_error([&] {
        if (run == "simulate") {
            build_simulation(r);
        } else {
            build_training(r);
        }
        return 0;
    });
}

// ---------------------------------------------------------------------------
// sweeps

struct GridAxis {
    std::string key;
    std::vector<std::string> values;  // canonical
};

struct SweepPlan {
    std::string run;
    std::vector<std::int64_t> seeds;
    Schema schema;          // of the run kind
    Resolved base;          // run config shared by all cells
    std::vector<GridAxis> axes;  // sorted by key
};

/// Splits a sweep file into [sweep] settings, [grid] axes (values separated by
/// '|') and the base run config; overrides may target any of them.
inline SweepPlan plan_sweep(const RawConfig& file, const RawConfig& overrides) {
    RawConfig sweep_raw;
    RawConfig run_raw;
    std::map<std::string, std::string> grid_raw;
    for (const auto* src : {&file, &overrides}) {
        for (const auto& [k, v] : *src) {
            if (k.rfind("sweep.", 0) == 0) {
                sweep_raw.emplace_back(k, v);
            } else if (k.rfind("grid.", 0) == 0) {
                grid_raw[k.substr(5)] = v;
            } else {
                run_raw.emplace_back(k, v);
            }
        }
    }
    SweepPlan p;
    const Schema sk = sweep_keys();
    const Resolved sr = resolve(sk, sweep_raw, {});
    p.run = get(sr, "sweep.run");
    p.seeds = get_int_list(sr, "sweep.seeds");
    if (p.seeds.empty()) throw ConfigError("config: sweep.seeds must list at least one seed");
    p.schema = schema_for(p.run);
    p.base = resolve(p.schema, run_raw, {});
    for (const auto& [key, raw] : grid_raw) {
        const KeySpec* spec = find_key(p.schema, key);
        if (!spec) throw ConfigError("config: unknown grid key '" + key + "'");
        GridAxis axis{key, {}};
        for (const auto& v : split(raw, '|')) {
            if (v.empty()) throw ConfigError("config: grid axis '" + key + "' has an empty value");
            axis.values.push_back(canonical(*spec, v));
        }
        if (axis.values.empty()) throw ConfigError("config: grid axis '" + key + "' has no values");
        p.axes.push_back(std::move(axis));
    }
    if (p.axes.empty()) throw ConfigError("config: sweep grid is empty");
    return p;
}

/// Cartesian product of the axes; the last axis varies fastest.
inline std::vector<std::vector<std::string>> grid_cells(const SweepPlan& p) {
    std::vector<std::vector<std::string>> cells{{}};
    for (const auto& axis : p.axes) {
        std::vector<std::vector<std::string>> next;
        for (const auto& c : cells) {
            for (const auto& v : axis.values) {
                auto d = c;
                d.push_back(v);
                next.push_back(std::move(d));
            }
        }
        cells = std::move(next);
    }
    return cells;
}

/// Resolved run config of one cell and seed.
inline Resolved cell_config(const SweepPlan& p, const std::vector<std::string>& cell, std::int64_t seed) {
    Resolved r = p.base;
    for (std::size_t i = 0; i < p.axes.size(); ++i) r[p.axes[i].key] = cell[i];
    const std::string s = std::to_string(seed);
    if (p.run == "simulate") {
        r["sim.seed"] = s;
    } else {
        r["train.seed"] = s;
        r["model.seed"] = s;
    }
    return r;
}

/// Sweep settings, grid and base config as one JSON document (re-loadable).
inline Json sweep_json(const SweepPlan& p) {
    Json j = config_json(p.schema, p.base);
    Json seeds = Json::array();
    for (auto s : p.seeds) seeds.push_back(s);
    j["sweep"] = Json{{"run", p.run}, {"seeds", seeds}};
    Json grid = Json::object();
    const auto& schema = p.schema;
    for (const auto& a : p.axes) {
        Json vals = Json::array();
        const KeySpec* spec = find_key(schema, a.key);
        for (const auto& v : a.values) {
            // List-valued keys stay strings so that ',' inside a value survives.
            if (spec->kind == ValueKind::IntList || spec->kind == ValueKind::RealList ||
                spec->kind == ValueKind::TextList) {
                vals.push_back(v);
            } else {
                vals.push_back(typed_value(*spec, v));
            }
        }
        grid[a.key] = vals;
    }
    j["grid"] = grid;
    return j;
}

}  // namespace steadynorm::cli
