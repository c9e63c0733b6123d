#include "trex/io/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace trex::io {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v)
{
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

template <class Int>
std::string fmt_int(Int v)
{
    return std::to_string(v);
}

std::string fmt(const std::array<std::size_t, 4>& a)
{
    return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]) + "," + std::to_string(a[3]);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected)
{
    throw ConfigError("bad value '" + value + "' for " + key + " (expected " + expected + ")");
}

template <class Int>
Int parse_int(const std::string& key, const std::string& value)
{
    Int v{};
    auto [end, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
    if (ec != std::errc{} || end != value.data() + value.size()) bad_value(key, value, "an integer");
    return v;
}

double parse_double(const std::string& key, const std::string& value)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) bad_value(key, value, "a finite number");
        return v;
    } catch (const std::logic_error&) {
        bad_value(key, value, "a finite number");
    }
}

bool parse_bool(const std::string& key, const std::string& value)
{
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "true or false");
}

std::array<std::size_t, 4> parse_quad(const std::string& key, const std::string& value)
{
    std::array<std::size_t, 4> out{};
    std::istringstream in(value);
    std::string part;
    std::size_t i = 0;
    while (std::getline(in, part, ',')) {
        if (i == 4) bad_value(key, value, "four comma-separated integers");
        out[i++] = parse_int<std::size_t>(key, trim(part));
    }
    if (i != 4) bad_value(key, value, "four comma-separated integers");
    return out;
}

struct Field {
    std::function<std::string()> get;
    std::function<void(const std::string&)> set;
};

using Table = std::vector<std::pair<std::string, Field>>;

#define TREX_SIZE(name, ref) \
    {name, {[&] { return fmt_int(ref); }, [&](const std::string& v) { ref = parse_int<std::size_t>(name, v); }}}
#define TREX_INT(name, ref) \
    {name, {[&] { return fmt_int(ref); }, [&](const std::string& v) { ref = parse_int<int>(name, v); }}}
#define TREX_DOUBLE(name, ref) \
    {name, {[&] { return fmt(ref); }, [&](const std::string& v) { ref = parse_double(name, v); }}}
#define TREX_BOOL(name, ref) \
    {name, {[&] { return fmt(ref); }, [&](const std::string& v) { ref = parse_bool(name, v); }}}

Table model_table(model::ModelConfig& m)
{
    auto& e = m.encoder;
    return {
        {"model.kind",
         {[&] { return std::string(model::to_string(m.kind)); }, [&](const std::string& v) { m.kind = model::parse_model_kind(v); }}},
        TREX_SIZE("model.dca_heads", m.dca_heads),
        TREX_BOOL("model.share_projections", m.share_projections),
        TREX_BOOL("model.share_layer_norm", m.share_layer_norm),
        TREX_SIZE("model.head_hidden", m.head_hidden),
        TREX_DOUBLE("model.dropout", m.dropout),
        TREX_BOOL("model.no_dca", m.no_dca),
        TREX_BOOL("model.no_dt", m.no_dt),
        {"model.si_view",
         {[&] { return std::string(m.si_view == model::SiView::Later ? "later" : "reference"); },
          [&](const std::string& v) {
              if (v == "later") {
                  m.si_view = model::SiView::Later;
              } else if (v == "reference") {
                  m.si_view = model::SiView::Reference;
              } else {
                  bad_value("model.si_view", v, "later or reference");
              }
          }}},
        TREX_SIZE("encoder.input_h", e.input_h),
        TREX_SIZE("encoder.input_w", e.input_w),
        TREX_SIZE("encoder.patch", e.patch),
        TREX_SIZE("encoder.window", e.window),
        {"encoder.depths", {[&] { return fmt(e.depths); }, [&](const std::string& v) { e.depths = parse_quad("encoder.depths", v); }}},
        {"encoder.dims", {[&] { return fmt(e.dims); }, [&](const std::string& v) { e.dims = parse_quad("encoder.dims", v); }}},
        {"encoder.heads", {[&] { return fmt(e.heads); }, [&](const std::string& v) { e.heads = parse_quad("encoder.heads", v); }}},
        TREX_SIZE("encoder.mlp_ratio", e.mlp_ratio),
    };
}

Table run_table(RunConfig& c)
{
    auto& t = c.train;
    auto& s = c.synth;
    Table table{
        {"seed", {[&] { return fmt_int(c.seed); }, [&](const std::string& v) { c.seed = parse_int<std::uint64_t>("seed", v); }}},
        {"task",
         {[&] { return std::string(data::to_string(t.task)); },
          [&](const std::string& v) {
              try {
                  t.task = data::parse_task(v);
              } catch (const std::invalid_argument& e) {
                  throw ConfigError(e.what());
              }
          }}},
        {"paths.data", {[&] { return c.data_dir; }, [&](const std::string& v) { c.data_dir = v; }}},
        {"paths.out", {[&] { return c.out_dir; }, [&](const std::string& v) { c.out_dir = v; }}},
        {"model.encoder", {[&] { return c.encoder_preset; }, [&](const std::string& v) {
             c.train.model.encoder = model::EncoderConfig::named(v);
             c.encoder_preset = v;
         }}},
    };
    for (auto& entry : model_table(t.model)) table.push_back(std::move(entry));
    Table rest{
        TREX_DOUBLE("train.lr", t.lr),
        TREX_SIZE("train.warmup_epochs", t.warmup_epochs),
        TREX_SIZE("train.epochs", t.epochs),
        TREX_SIZE("train.batch", t.batch),
        TREX_SIZE("train.k_folds", t.k_folds),
        TREX_BOOL("train.no_balance", t.no_balance),
        TREX_BOOL("train.no_augment", t.no_augment),
        TREX_DOUBLE("train.grad_clip", t.grad_clip),
        TREX_BOOL("train.constant_after_warmup", t.constant_after_warmup),
        TREX_SIZE("train.batches_per_epoch", t.batches_per_epoch),
        TREX_SIZE("train.val_log_pairs", t.val_log_pairs),
        TREX_SIZE("train.threads", t.threads),
        TREX_SIZE("eval.k", c.eval.k),
        {"eval.aggregation",
         {[&] { return std::string(eval::to_string(c.eval.aggregation)); },
          [&](const std::string& v) {
              try {
                  c.eval.aggregation = eval::parse_aggregation(v);
              } catch (const std::invalid_argument& e) {
                  throw ConfigError(e.what());
              }
          }}},
        TREX_DOUBLE("eval.overlay_alpha", c.eval.overlay_alpha),
        TREX_SIZE("synth.patients", s.patients),
        TREX_DOUBLE("synth.lr_rate", s.lr_rate),
        TREX_SIZE("synth.image_size", s.image_size),
        TREX_INT("synth.visit_interval_days", s.visit_interval_days),
        TREX_INT("synth.visit_jitter_days", s.visit_jitter_days),
        TREX_SIZE("synth.min_followups", s.min_followups),
        TREX_SIZE("synth.max_followups", s.max_followups),
        TREX_SIZE("synth.restaging_images", s.restaging_images),
        TREX_SIZE("synth.min_images", s.min_images),
        TREX_SIZE("synth.max_images", s.max_images),
        TREX_SIZE("synth.min_detection_images", s.min_detection_images),
        TREX_SIZE("synth.max_detection_images", s.max_detection_images),
        TREX_BOOL("synth.include_pre_tnt", s.include_pre_tnt),
        TREX_INT("synth.pre_tnt_days", s.pre_tnt_days),
        TREX_DOUBLE("synth.detection_radius_min", s.detection_radius_min),
        TREX_DOUBLE("synth.detection_radius_max", s.detection_radius_max),
        TREX_DOUBLE("synth.detection_threshold", s.detection_threshold),
        TREX_DOUBLE("synth.subthreshold_radius_1", s.subthreshold_radius[0]),
        TREX_DOUBLE("synth.subthreshold_radius_2", s.subthreshold_radius[1]),
        TREX_DOUBLE("synth.subthreshold_radius_3", s.subthreshold_radius[2]),
        TREX_SIZE("synth.min_onset_visits", s.min_onset_visits),
        TREX_SIZE("synth.max_onset_visits", s.max_onset_visits),
        TREX_DOUBLE("synth.natural_spot_rate", s.natural_spot_rate),
        TREX_DOUBLE("synth.scar_pigment_rate", s.scar_pigment_rate),
        TREX_DOUBLE("synth.blood_rate", s.blood_rate),
        TREX_DOUBLE("synth.stool_rate", s.stool_rate),
        TREX_DOUBLE("synth.telangiectasia_rate", s.telangiectasia_rate),
        TREX_DOUBLE("synth.poor_quality_rate", s.poor_quality_rate),
        TREX_DOUBLE("synth.pre_tnt_lr_boost", s.pre_tnt_lr_boost),
        TREX_DOUBLE("synth.view_shift_px", s.view_shift_px),
    };
    for (auto& entry : rest) table.push_back(std::move(entry));
    return table;
}

#undef TREX_SIZE
#undef TREX_INT
#undef TREX_DOUBLE
#undef TREX_BOOL

void set_in(Table& table, const std::string& key, const std::string& value)
{
    for (auto& [name, field] : table) {
        if (name == key) {
            field.set(value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

Entries entries_of(Table& table)
{
    Entries out;
    for (auto& [name, field] : table) out.emplace_back(name, field.get());
    return out;
}

}  // namespace

void RunConfig::validate() const
{
    if (train.seed != seed) throw ConfigError("train.seed must mirror seed");
    try {
        train.validate();
        synth.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (eval.k == 0) throw ConfigError("eval.k must be at least 1");
    if (!(eval.overlay_alpha >= 0.0 && eval.overlay_alpha <= 1.0)) throw ConfigError("eval.overlay_alpha must lie in [0,1]");
}

Entries config_entries(const RunConfig& cfg)
{
    RunConfig copy = cfg;
    auto table = run_table(copy);
    return entries_of(table);
}

Entries model_config_entries(const model::ModelConfig& cfg)
{
    model::ModelConfig copy = cfg;
    auto table = model_table(copy);
    return entries_of(table);
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value)
{
    auto table = run_table(cfg);
    set_in(table, key, value);
    cfg.train.seed = cfg.seed;
}

void set_model_config_value(model::ModelConfig& cfg, const std::string& key, const std::string& value)
{
    auto table = model_table(cfg);
    set_in(table, key, value);
}

RunConfig parse_config(std::istream& in, const std::string& name)
{
    Entries entries;
    std::map<std::string, std::size_t> seen;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = trim(line);
        if (text.empty() || text[0] == '#') continue;
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw ConfigError(name + ":" + std::to_string(line_no) + ": expected key=value");
        const auto key = trim(text.substr(0, eq));
        const auto value = trim(text.substr(eq + 1));
        if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
            throw ConfigError(name + ":" + std::to_string(line_no) + ": duplicate key '" + key + "' (first on line " +
                              std::to_string(it->second) + ")");
        }
        entries.emplace_back(key, value);
    }
    RunConfig cfg;
    auto apply = [&](const std::pair<std::string, std::string>& kv) {
        try {
            set_config_value(cfg, kv.first, kv.second);
        } catch (const std::invalid_argument& e) {
            throw ConfigError(name + ":" + std::to_string(seen[kv.first]) + ": " + e.what());
        }
    };
    for (const auto& kv : entries) {
        if (kv.first == "model.encoder") apply(kv);
    }
    for (const auto& kv : entries) {
        if (kv.first != "model.encoder") apply(kv);
    }
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    return parse_config(in, path.string());
}

model::ModelConfig parse_model_config(const Entries& entries)
{
    model::ModelConfig cfg;
    for (const auto& [k, v] : entries) set_model_config_value(cfg, k, v);
    return cfg;
}

void write_config(const RunConfig& cfg, std::ostream& out)
{
    for (const auto& [k, v] : config_entries(cfg)) out << k << '=' << v << '\n';
}

void write_config(const RunConfig& cfg, const std::filesystem::path& path)
{
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write config " + path.string());
    write_config(cfg, out);
}

}  // namespace trex::io
