// amt: command-line front end for the transcription toolkit.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "amt/acceptance.hpp"
#include "amt/augment.hpp"
#include "amt/dataset.hpp"
#include "amt/decoder.hpp"
#include "amt/dsp.hpp"
#include "amt/error.hpp"
#include "amt/eval.hpp"
#include "amt/fixtures.hpp"
#include "amt/losses.hpp"
#include "amt/midi.hpp"
#include "amt/network.hpp"
#include "amt/pianoroll.hpp"
#include "amt/pipeline.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitUsage = 2;

// Thrown for bad flag combinations detected after parsing.
struct UsageError : amt::Error {
  using amt::Error::Error;
};

// Exit code for a run that completed but found problems.
struct ValidationFailure {
  int code = kExitValidation;
};

struct Globals {
  std::string format = "text";
  int threads = 1;
  std::uint64_t seed = 0;
  std::string config_path;
  std::string log_level = "info";
  json config = json::object();
};

Globals g;
CLI::Option* g_format_opt = nullptr;
CLI::Option* g_threads_opt = nullptr;

// Subcommand -> action, run after parsing and config loading.
std::vector<std::pair<CLI::App*, std::function<void()>>> commands;

bool debug() { return g.log_level == "debug"; }

void log_config(const std::string& command, const json& resolved) {
  if (!debug()) return;
  json j = {{"command", command}, {"format", g.format}, {"threads", g.threads}, {"seed", g.seed}};
  j["config_file"] = g.config_path;
  j["resolved"] = resolved;
  std::cerr << "[debug] " << j.dump() << "\n";
}

void emit(const json& j, const std::string& text) {
  if (g.format == "json")
    std::cout << j.dump(2) << "\n";
  else
    std::cout << text;
}

// Value from the config file section, if present.
template <typename T>
std::optional<T> cfg_value(const char* section, const char* key) {
  if (!g.config.contains(section) || !g.config[section].contains(key)) return std::nullopt;
  return g.config[section][key].get<T>();
}

// Flag value wins over the config file, which wins over the default.
template <typename T>
void resolve(T& target, const CLI::Option* flag, const T& flag_value, const char* section, const char* key) {
  if (flag && flag->count() > 0)
    target = flag_value;
  else if (auto v = cfg_value<T>(section, key))
    target = *v;
}

void load_config() {
  std::string path = g.config_path;
  if (path.empty())
    if (const char* env = std::getenv("AMT_CONFIG")) path = env;
  if (path.empty()) return;
  g.config_path = path;
  const auto bytes = amt::read_file_bytes(path);
  try {
    g.config = json::parse(bytes.begin(), bytes.end());
  } catch (const json::parse_error& e) {
    throw amt::ParseError(path + ": " + e.what(), e.byte);
  }
  if (!g.config.is_object()) throw amt::ParseError(path + ": config must be a JSON object");
  const int version = g.config.value("version", 1);
  if (version != 1) throw amt::ParseError(path + ": unsupported config version " + std::to_string(version));
  if (g.config.contains("threads") && !g_threads_opt->count()) g.threads = g.config["threads"].get<int>();
  if (g.config.contains("format") && !g_format_opt->count()) g.format = g.config["format"].get<std::string>();
  if (g.threads < 1) throw amt::InvalidParam(path + ": threads must be >= 1");
  if (g.format != "text" && g.format != "json") throw amt::InvalidParam(path + ": format must be text or json");
}

std::string fmt(double v, const char* f = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  amt::write_file_bytes(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

std::string read_text(const std::string& path) {
  const auto b = amt::read_file_bytes(path);
  return std::string(b.begin(), b.end());
}

amt::nn::ModelSpec load_spec(const std::string& name_or_path) {
  if (name_or_path == "toy" || name_or_path == "reference") return amt::nn::ModelSpec::by_name(name_or_path);
  try {
    return amt::nn::ModelSpec::from_json(read_text(name_or_path));
  } catch (const amt::Error& e) {
    throw amt::ParseError(name_or_path + ": " + e.what());
  }
}

amt::nn::Model load_model(const std::string& spec, const std::string& weights_path) {
  auto weights = amt::nn::load_weights(amt::read_file_bytes(weights_path));
  return amt::nn::Model(load_spec(spec), std::move(weights));
}

// --- shared option groups --------------------------------------------------

struct FrontendFlags {
  std::string preset;
  int hop = 0;
  CLI::Option* preset_opt = nullptr;
  CLI::Option* hop_opt = nullptr;

  void add(CLI::App* app) {
    preset_opt = app->add_option("--preset", preset, "Frontend preset: ov-2023 (hop 384) or of-2017 (hop 512)");
    hop_opt = app->add_option("--hop", hop, "Override the hop size in samples");
  }
  amt::FrontendConfig resolve_config() const {
    std::string name = "ov-2023";
    ::resolve(name, preset_opt, preset, "frontend", "preset");
    auto cfg = amt::FrontendConfig::preset(name);
    ::resolve(cfg.hop, hop_opt, hop, "frontend", "hop");
    cfg.validate();
    return cfg;
  }
};

struct DecoderFlags {
  double sigma = 1.0, rho = 0.74, mu = -0.01;
  CLI::Option *sigma_opt = nullptr, *rho_opt = nullptr, *mu_opt = nullptr;

  void add(CLI::App* app) {
    sigma_opt = app->add_option("--sigma", sigma, "Gaussian smoothing std in frames")->capture_default_str();
    rho_opt = app->add_option("--rho", rho, "Onset threshold (inclusive)")->capture_default_str();
    mu_opt = app->add_option("--mu", mu, "Time shift in seconds")->capture_default_str();
  }
  amt::DecoderParams resolve_params() const {
    amt::DecoderParams p;
    ::resolve(p.sigma, sigma_opt, sigma, "decoder", "sigma");
    ::resolve(p.rho, rho_opt, rho, "decoder", "rho");
    ::resolve(p.mu, mu_opt, mu, "decoder", "mu");
    p.validate();
    return p;
  }
};

json decoder_json(const amt::DecoderParams& p) { return {{"sigma", p.sigma}, {"rho", p.rho}, {"mu", p.mu}}; }

json frontend_json(const amt::FrontendConfig& c) {
  return {{"sample_rate", c.sample_rate}, {"window", c.window}, {"hop", c.hop},     {"n_mels", c.n_mels},
          {"f_min", c.f_min},             {"f_max", c.f_max},   {"log_floor", c.log_floor}};
}

json score_json(const amt::ScorePrediction& s) {
  json events = json::array();
  for (const auto& e : s.events) events.push_back({{"pitch", e.pitch}, {"velocity", e.velocity}, {"time", e.time}});
  return events;
}

std::string roll_path(const std::string& dir, const std::string& name) { return (fs::path(dir) / (name + ".amtr")).string(); }

// --- subcommands -----------------------------------------------------------

struct Rollify {
  std::string input, out_dir;
  double delta_t = 0.024;
  std::size_t frames = 0;
  bool no_sustain = false, csv = false;
  CLI::Option* delta_opt = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("rollify", "MIDI or note table -> label piano rolls");
    c->add_option("input", input, "MIDI (.mid) or note table")->required();
    c->add_option("-o,--out-dir", out_dir, "Output directory")->required();
    delta_opt = c->add_option("--delta-t", delta_t, "Frame length in seconds")->capture_default_str();
    c->add_option("--frames", frames, "Fixed frame count (default: from duration)");
    c->add_flag("--no-sustain", no_sustain, "Keep note-off times, ignore the sustain pedal");
    c->add_flag("--csv", csv, "Also write CSV copies");
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    amt::RollConfig rc;
    resolve(rc.delta_t, delta_opt, delta_t, "roll", "delta_t");
    rc.num_frames = frames;
    rc.validate();
    amt::LossConfig lc;
    if (auto v = cfg_value<double>("loss", "onset_length")) lc.onset_length = *v;
    log_config("rollify", {{"delta_t", rc.delta_t}, {"frames", frames}, {"sustain", !no_sustain}, {"onset_length", lc.onset_length}});

    auto seq = amt::load_notes(input);
    if (!no_sustain) seq = amt::resolve_sustain(seq);
    const auto q = amt::quantize(seq, rc);
    const auto p = amt::prolong_onsets(q.onset, q.velocity);
    amt::RollConfig fixed = rc;
    fixed.num_frames = q.onset.num_frames();
    const auto labels = amt::quantize(amt::truncate_for_onset_labels(seq, lc.onset_length), fixed).frames;

    fs::create_directories(out_dir);
    const std::pair<const char*, const amt::PianoRoll*> rolls[] = {
        {"onset", &q.onset},       {"velocity", &q.velocity},    {"frames", &q.frames},
        {"onset3", &p.onset},      {"velocity3", &p.velocity},   {"onset_labels", &labels}};
    json files = json::object();
    for (auto [name, roll] : rolls) {
      amt::PianoRoll r = *roll;
      if (std::string(name) == "onset_labels") r.kind = amt::RollKind::FrameIndicator;
      amt::save_roll(r, roll_path(out_dir, name));
      if (csv) write_text((fs::path(out_dir) / (std::string(name) + ".csv")).string(), amt::roll_to_csv(r.values));
      files[name] = roll_path(out_dir, name);
    }
    json report = {{"notes", seq.notes.size()}, {"frames", q.onset.num_frames()}, {"delta_t", rc.delta_t}, {"files", files}};
    for (const auto& w : seq.warnings) std::cerr << "warning: " << w << "\n";
    emit(report, "wrote " + std::to_string(std::size(rolls)) + " rolls (88 x " + std::to_string(q.onset.num_frames()) +
                     ") for " + std::to_string(seq.notes.size()) + " notes to " + out_dir + "\n");
  }
};

struct Frontend {
  std::string input, output;
  FrontendFlags ff;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("frontend", "WAV -> log-mel + derivative input (AMTR spectro file)");
    c->add_option("input", input, "WAV file")->required();
    c->add_option("-o,--out", output, "Output .amtr file")->required();
    ff.add(c);
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    const auto cfg = ff.resolve_config();
    log_config("frontend", frontend_json(cfg));
    const auto w = amt::resample(amt::load_wav(input), cfg.sample_rate);
    const auto s = amt::compute_frontend(w, cfg, g.threads);
    amt::write_file_bytes(output, amt::encode_spectro(s));
    emit({{"frames", s.num_frames()}, {"mels", s.x.rows()}, {"frame_seconds", cfg.frame_seconds()}, {"out", output}},
         "wrote 2 x " + std::to_string(s.x.rows()) + " x " + std::to_string(s.num_frames()) + " input to " + output + "\n");
  }
};

struct Augment {
  std::string wav, notes, out_wav, out_notes;
  double alpha = 1.0, beta = 1.0, semitones = 0.0;
  CLI::Option *beta_opt = nullptr, *semi_opt = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("augment", "Time-stretch and pitch-shift audio with matching labels");
    c->add_option("--wav", wav, "Input WAV")->required();
    c->add_option("--notes", notes, "Input labels (MIDI or note table)");
    c->add_option("--out-wav", out_wav, "Output WAV")->required();
    c->add_option("--out-notes", out_notes, "Output labels");
    c->add_option("--alpha", alpha, "Time-stretch factor (duration scales by alpha)")->capture_default_str();
    beta_opt = c->add_option("--beta", beta, "Pitch-shift factor (frequencies scale by beta)");
    semi_opt = c->add_option("--semitones", semitones, "Pitch shift in semitones (beta = 2^(n/12))");
    beta_opt->excludes(semi_opt);
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    if (!out_notes.empty() && notes.empty()) throw UsageError("--out-notes needs --notes");
    amt::AugmentParams p = semi_opt->count() ? amt::AugmentParams::from_semitones(alpha, semitones)
                                             : amt::AugmentParams{alpha, beta};
    p.validate();
    log_config("augment", {{"alpha", p.alpha}, {"beta", p.beta}, {"semitones", p.semitones()}});
    const auto w = amt::load_wav(wav);
    const amt::NoteSequence seq = notes.empty() ? amt::NoteSequence{} : amt::load_notes(notes);
    const auto out = amt::augment_pair(w, seq, p);
    amt::save_wav(out.audio, out_wav);
    if (!out_notes.empty()) amt::save_notes(out.labels, out_notes);
    emit({{"alpha", p.alpha}, {"beta", p.beta}, {"semitones", p.semitones()}, {"samples", out.audio.samples.size()},
          {"notes", out.labels.notes.size()}, {"dropped_notes", out.dropped_notes}},
         "alpha " + fmt(p.alpha, "%g") + ", beta " + fmt(p.beta, "%g") + " (" + fmt(p.semitones(), "%+.3g") +
             " st): " + std::to_string(out.audio.samples.size()) + " samples, " +
             std::to_string(out.labels.notes.size()) + " notes, " + std::to_string(out.dropped_notes) + " dropped\n");
  }
};

struct Infer {
  std::string input, spec = "toy", weights, out_dir;
  int stages = 0;
  FrontendFlags ff;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("infer", "WAV or spectro file + weights -> predicted rolls");
    c->add_option("input", input, "WAV file or .amtr spectro file from `frontend`")->required();
    c->add_option("--spec", spec, "Model spec: toy, reference, or a spec JSON file")->capture_default_str();
    c->add_option("--weights", weights, "AMTW weight file")->required();
    c->add_option("-o,--out-dir", out_dir, "Output directory")->required();
    c->add_option("--stages", stages, "Run only the first N onset stages");
    ff.add(c);
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    const auto cfg = ff.resolve_config();
    log_config("infer", {{"spec", spec}, {"weights", weights}, {"stages", stages}, {"frontend", frontend_json(cfg)}});
    const auto model = load_model(spec, weights);
    amt::SpectroInput in;
    if (fs::path(input).extension() == ".amtr")
      in = amt::decode_spectro(amt::read_file_bytes(input));
    else
      in = amt::decode_spectro(amt::encode_spectro(
          amt::compute_frontend(amt::resample(amt::load_wav(input), cfg.sample_rate), cfg, g.threads)));
    amt::nn::ForwardOptions opt;
    opt.threads = g.threads;
    opt.num_stages = stages;
    opt.delta_t = cfg.frame_seconds();
    const auto out = model.forward(in, opt);
    fs::create_directories(out_dir);
    json files = json::array();
    for (std::size_t i = 0; i < out.onset_stages.size(); ++i) {
      const auto path = roll_path(out_dir, "onset_" + std::to_string(i + 1));
      amt::save_roll(out.onset_stages[i], path);
      files.push_back(path);
    }
    amt::save_roll(out.velocity, roll_path(out_dir, "velocity"));
    files.push_back(roll_path(out_dir, "velocity"));
    emit({{"frames", in.num_frames()}, {"stages", out.onset_stages.size()}, {"files", files}},
         "wrote " + std::to_string(out.onset_stages.size()) + " onset rolls and 1 velocity roll (88 x " +
             std::to_string(in.num_frames()) + ") to " + out_dir + "\n");
  }
};

struct Decode {
  std::string onset, velocity, output;
  double delta_t = 0.024;
  CLI::Option* delta_opt = nullptr;
  DecoderFlags df;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("decode", "Predicted onset and velocity rolls -> note events");
    c->add_option("--onset", onset, "Final-stage onset roll (.amtr)")->required();
    c->add_option("--velocity", velocity, "Velocity roll (.amtr)")->required();
    c->add_option("-o,--out", output, "Output note table or .mid (default: stdout table)");
    delta_opt = c->add_option("--delta-t", delta_t, "Frame length in seconds")->capture_default_str();
    df.add(c);
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    const auto p = df.resolve_params();
    double dt = delta_t;
    resolve(dt, delta_opt, delta_t, "roll", "delta_t");
    if (!(dt > 0)) throw amt::InvalidParam("--delta-t must be positive");
    log_config("decode", {{"decoder", decoder_json(p)}, {"delta_t", dt}});
    const auto o = amt::load_roll(onset), v = amt::load_roll(velocity);
    const auto score = amt::decode(o.values, v.values, p, dt);
    const auto notes = amt::score_to_notes(score);
    if (!output.empty()) amt::save_notes(notes, output);
    json j = {{"decoder", decoder_json(p)}, {"delta_t", dt}, {"events", score_json(score)}};
    std::string text = "# sigma=" + fmt(p.sigma, "%g") + " rho=" + fmt(p.rho, "%g") + " mu=" + fmt(p.mu, "%g") + "\n";
    text += output.empty() ? amt::write_notes_table(notes)
                           : "wrote " + std::to_string(score.events.size()) + " events to " + output + "\n";
    emit(j, text);
  }
};

struct Loss {
  std::string kind = "total";
  std::vector<std::string> preds;
  std::string notes, onset_label, frame_label, frame_weights, onset3, velocity3;
  double weight = 2.0, lambda = 1.0, eps = 1e-7, delta_t = 0.024;
  CLI::Option *weight_opt = nullptr, *lambda_opt = nullptr, *eps_opt = nullptr, *delta_opt = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("loss", "Prediction rolls + labels -> per-term loss breakdown (JSON)");
    c->add_option("--kind", kind,
                  "onset | frame | frame-weighted | total | total-weighted | velocity | multitask")
        ->capture_default_str();
    c->add_option("--pred", preds, "Prediction rolls in the order the loss reads them")->required();
    c->add_option("--notes", notes, "Reference notes; labels are built from them");
    c->add_option("--onset-label", onset_label, "I_onset roll");
    c->add_option("--frame-label", frame_label, "I_frame roll");
    c->add_option("--frame-weights", frame_weights, "Frame weight roll");
    c->add_option("--onset3", onset3, "1_o3 roll");
    c->add_option("--velocity3", velocity3, "R_V3 roll");
    weight_opt = c->add_option("--frame-weight", weight, "w for early note frames")->capture_default_str();
    lambda_opt = c->add_option("--lambda", lambda, "Velocity loss weight")->capture_default_str();
    eps_opt = c->add_option("--eps", eps, "Log clamp")->capture_default_str();
    delta_opt = c->add_option("--delta-t", delta_t, "Frame length for labels built from --notes")->capture_default_str();
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    amt::LossConfig cfg;
    resolve(cfg.frame_weight, weight_opt, weight, "loss", "frame_weight");
    resolve(cfg.lambda, lambda_opt, lambda, "loss", "lambda");
    resolve(cfg.eps, eps_opt, eps, "loss", "eps");
    if (auto v = cfg_value<double>("loss", "onset_length")) cfg.onset_length = *v;
    cfg.validate();
    const auto k = amt::loss_kind_from_string(kind);
    log_config("loss", {{"kind", kind}, {"frame_weight", cfg.frame_weight}, {"lambda", cfg.lambda}, {"eps", cfg.eps}});

    std::vector<amt::Matrix> p;
    for (const auto& path : preds) p.push_back(amt::load_roll(path).values);
    const std::size_t rows = p.front().rows(), cols = p.front().cols();

    amt::LossLabels labels;
    if (!notes.empty()) {
      amt::RollConfig rc;
      rc.delta_t = delta_t;
      rc.num_frames = cols;
      labels = amt::make_labels(amt::resolve_sustain(amt::load_notes(notes)), rc, cfg);
    } else {
      labels = {amt::Matrix(rows, cols), amt::Matrix(rows, cols), amt::Matrix(rows, cols, 1.0), amt::Matrix(rows, cols),
                amt::Matrix(rows, cols)};
    }
    auto override_roll = [](amt::Matrix& m, const std::string& path) {
      if (!path.empty()) m = amt::load_roll(path).values;
    };
    override_roll(labels.onset, onset_label);
    override_roll(labels.frames, frame_label);
    override_roll(labels.frame_weights, frame_weights);
    override_roll(labels.onset3, onset3);
    override_roll(labels.velocity3, velocity3);
    if (notes.empty() && onset_label.empty() && frame_label.empty() && onset3.empty())
      throw UsageError("loss needs --notes or label rolls");

    json terms;
    double total = amt::evaluate_loss(k, p, labels, cfg);
    switch (k) {
      case amt::LossKind::Total:
      case amt::LossKind::TotalWeighted: {
        const auto t = amt::total_loss(p[0], p[1], labels, cfg, k == amt::LossKind::TotalWeighted);
        terms = {{"onset", t.onset}, {"frame", t.frame}};
        break;
      }
      case amt::LossKind::Multitask: {
        std::vector<amt::Matrix> stages(p.begin(), p.end() - 1);
        const auto m = amt::multitask_loss(stages, p.back(), labels, cfg);
        for (std::size_t i = 0; i < m.stages.size(); ++i) terms["stage_" + std::to_string(i + 1)] = m.stages[i];
        terms["velocity"] = m.velocity;
        terms["lambda"] = cfg.lambda;
        break;
      }
      default:
        terms[amt::to_string(k)] = total;
    }
    json j = {{"kind", amt::to_string(k)}, {"total", total}, {"terms", terms}};
    // The breakdown is JSON in both formats.
    std::cout << j.dump(2) << "\n";
  }
};

struct Eval {
  std::string ref, est, corpus, est_dir;
  double onset_tol = 0.05, vel_tol = 0.1;
  bool velocity = false, alignment = false;
  CLI::Option *onset_opt = nullptr, *vel_opt = nullptr;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("eval", "Onset P/R/F1, onset+velocity, and alignment S/D/I/ER");
    c->add_option("--ref", ref, "Reference notes (.tsv or .mid)");
    c->add_option("--est", est, "Estimated notes (.tsv or .mid)");
    c->add_option("--corpus", corpus, "Manifest CSV; reference = midi column");
    c->add_option("--est-dir", est_dir, "Directory with <midi stem>.tsv estimates for --corpus");
    onset_opt = c->add_option("--onset-tol", onset_tol, "Onset tolerance in seconds")->capture_default_str();
    vel_opt = c->add_option("--vel-tol", vel_tol, "Velocity tolerance")->capture_default_str();
    c->add_flag("--velocity", velocity, "Also require velocity within --vel-tol");
    c->add_flag("--alignment", alignment, "Report S/D/I/ER alignment statistics");
    commands.push_back({c, [this] { run(); }});
  }

  struct Piece {
    amt::EvalReport onset, onset_velocity;
    amt::AlignmentStats align;
  };

  static json report_json(const amt::EvalReport& r) {
    json j = {{"precision", r.precision}, {"recall", r.recall},       {"f1", r.f1},
              {"matched", r.matched},     {"ref_count", r.ref_count}, {"est_count", r.est_count}};
    if (r.precision_undefined) j["precision_undefined"] = true;
    if (r.recall_undefined) j["recall_undefined"] = true;
    return j;
  }
  static json align_json(const amt::AlignmentStats& a) {
    if (a.undefined) return {{"undefined", true}, {"ref_count", 0}};
    return {{"S", a.substitutions}, {"D", a.deletions}, {"I", a.insertions}, {"ER", a.error_rate}, {"ref_count", a.ref_count}};
  }
  static std::string report_text(const char* name, const amt::EvalReport& r) {
    return std::string(name) + ": P=" + fmt(r.precision, "%.4f") + " R=" + fmt(r.recall, "%.4f") +
           " F1=" + fmt(r.f1, "%.4f") + " (" + std::to_string(r.matched) + " matched, " + std::to_string(r.ref_count) +
           " ref, " + std::to_string(r.est_count) + " est)\n";
  }
  static std::string align_text(const amt::AlignmentStats& a) {
    if (a.undefined) return "alignment: undefined (empty reference)\n";
    return "alignment: S=" + fmt(a.substitutions, "%.4f") + " D=" + fmt(a.deletions, "%.4f") +
           " I=" + fmt(a.insertions, "%.4f") + " ER=" + fmt(a.error_rate, "%.4f") + "\n";
  }

  Piece score(const std::string& r, const std::string& e, const amt::MatchConfig& cfg) const {
    const auto rs = amt::notes_to_score(amt::load_notes(r));
    const auto es = amt::notes_to_score(amt::load_notes(e));
    Piece p;
    p.onset = amt::onset_eval(rs, es, cfg);
    if (velocity) p.onset_velocity = amt::onset_velocity_eval(rs, es, cfg);
    if (alignment) p.align = amt::alignment_stats(rs, es, cfg);
    return p;
  }

  void run() {
    amt::MatchConfig cfg;
    resolve(cfg.onset_tolerance, onset_opt, onset_tol, "eval", "onset_tolerance");
    resolve(cfg.velocity_tolerance, vel_opt, vel_tol, "eval", "velocity_tolerance");
    cfg.validate();
    log_config("eval", {{"onset_tolerance", cfg.onset_tolerance}, {"velocity_tolerance", cfg.velocity_tolerance},
                        {"velocity", velocity}, {"alignment", alignment}});

    if (!corpus.empty()) {
      if (!ref.empty() || !est.empty()) throw UsageError("--corpus cannot be combined with --ref/--est");
      if (est_dir.empty()) throw UsageError("--corpus needs --est-dir");
      run_corpus(cfg);
      return;
    }
    if (ref.empty() || est.empty()) throw UsageError("eval needs --ref and --est (or --corpus)");
    const auto p = score(ref, est, cfg);
    json j = {{"onset", report_json(p.onset)}};
    std::string text = report_text("onset", p.onset);
    if (velocity) {
      j["onset_velocity"] = report_json(p.onset_velocity);
      text += report_text("onset+velocity", p.onset_velocity);
    }
    if (alignment) {
      j["alignment"] = align_json(p.align);
      text += align_text(p.align);
    }
    emit(j, text);
  }

  void run_corpus(const amt::MatchConfig& cfg) const {
    const auto m = amt::load_manifest(corpus);
    const fs::path base = fs::path(corpus).parent_path();
    std::vector<amt::EvalReport> onset_reports, vel_reports;
    std::vector<amt::AlignmentStats> aligns;
    json pieces = json::array();
    std::string text;
    for (const auto& e : m.entries) {
      const fs::path midi = fs::path(e.midi).is_absolute() ? fs::path(e.midi) : base / e.midi;
      const fs::path est_path = fs::path(est_dir) / (fs::path(e.midi).stem().string() + ".tsv");
      const auto p = score(midi.string(), est_path.string(), cfg);
      onset_reports.push_back(p.onset);
      json j = {{"midi", e.midi}, {"onset", report_json(p.onset)}};
      text += e.midi + "\n  " + report_text("onset", p.onset);
      if (velocity) {
        vel_reports.push_back(p.onset_velocity);
        j["onset_velocity"] = report_json(p.onset_velocity);
        text += "  " + report_text("onset+velocity", p.onset_velocity);
      }
      if (alignment) {
        aligns.push_back(p.align);
        j["alignment"] = align_json(p.align);
        text += "  " + align_text(p.align);
      }
      pieces.push_back(j);
    }
    auto summary_json = [](const amt::CorpusSummary& s) {
      json j = json::object();
      for (const auto& [k, v] : s) j[k] = {{"median", v.median}, {"mean", v.mean}, {"count", v.count}};
      return j;
    };
    auto summary_text = [](const char* name, const amt::CorpusSummary& s) {
      std::string t = std::string(name) + " (median / mean over n):\n";
      for (const auto& [k, v] : s)
        t += "  " + k + " " + fmt(v.median, "%.4f") + " / " + fmt(v.mean, "%.4f") + " n=" + std::to_string(v.count) + "\n";
      return t;
    };
    json summary = {{"onset", summary_json(amt::corpus_aggregate(onset_reports))}};
    text += summary_text("onset", amt::corpus_aggregate(onset_reports));
    if (velocity) {
      summary["onset_velocity"] = summary_json(amt::corpus_aggregate(vel_reports));
      text += summary_text("onset+velocity", amt::corpus_aggregate(vel_reports));
    }
    if (alignment) {
      summary["alignment"] = summary_json(amt::corpus_aggregate(aligns));
      text += summary_text("alignment", amt::corpus_aggregate(aligns));
    }
    emit({{"pieces", pieces}, {"summary", summary}}, text);
  }
};

struct Stats {
  std::string manifest;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("stats", "Per-split manifest statistics");
    c->add_option("manifest", manifest, "Manifest CSV")->required();
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    log_config("stats", {{"manifest", manifest}});
    const auto t = amt::stats(amt::load_manifest(manifest));
    if (g.format == "json")
      std::cout << amt::stats_json(t) << "\n";
    else
      std::cout << amt::stats_text(t);
  }
};

struct ValidateSplits {
  std::string manifest;
  double slack = 0.03;
  CLI::Option* slack_opt = nullptr;
  bool strict = false;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("validate-splits", "Check composition leakage and split proportions");
    c->add_option("manifest", manifest, "Manifest CSV")->required();
    slack_opt = c->add_option("--slack", slack, "Allowed deviation from 80/10/10 (fraction)")->capture_default_str();
    c->add_flag("--strict", strict, "Treat warnings as failures");
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    amt::SplitTargets targets;
    resolve(targets.slack, slack_opt, slack, "dataset", "slack");
    if (!(targets.slack >= 0)) throw amt::InvalidParam("--slack must be non-negative");
    log_config("validate-splits", {{"manifest", manifest}, {"slack", targets.slack}, {"strict", strict}});
    const auto v = amt::validate_splits(amt::load_manifest(manifest), targets);
    std::size_t errors = 0, warnings = 0;
    json list = json::array();
    std::string text;
    for (const auto& x : v) {
      const bool err = x.severity == amt::Severity::Error;
      (err ? errors : warnings)++;
      list.push_back({{"severity", err ? "error" : "warning"}, {"rule", x.rule}, {"message", x.message}});
      text += std::string(err ? "error" : "warning") + " [" + x.rule + "] " + x.message + "\n";
    }
    text += std::to_string(errors) + " errors, " + std::to_string(warnings) + " warnings\n";
    emit({{"errors", errors}, {"warnings", warnings}, {"violations", list}}, text);
    if (errors > 0 || (strict && warnings > 0)) throw ValidationFailure{};
  }
};

struct Selftest {
  std::vector<std::string> only;
  bool list = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("selftest", "Run the acceptance property suites");
    c->add_option("criteria", only, "Run only these criteria");
    c->add_flag("--list", list, "List criterion names");
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    if (list) {
      for (const auto& n : amt::acceptance::criteria()) std::cout << n << "\n";
      return;
    }
    amt::acceptance::Options opt;
    if (g.seed != 0) opt.seed = g.seed;
    log_config("selftest", {{"seed", opt.seed}, {"criteria", only}});
    if (g.format != "json")
      opt.on_result = [](const amt::acceptance::Result& r) {
        std::cout << amt::acceptance::format_line(r) << std::endl;
      };
    const auto results = amt::acceptance::run(opt, only);
    std::size_t failed = 0;
    json arr = json::array();
    for (const auto& r : results) {
      failed += !r.passed;
      arr.push_back({{"name", r.name}, {"passed", r.passed}, {"seconds", r.seconds}, {"detail", r.detail}});
    }
    if (g.format == "json")
      std::cout << json{{"passed", results.size() - failed}, {"total", results.size()}, {"criteria", arr}}.dump(2) << "\n";
    else
      std::cout << results.size() - failed << "/" << results.size() << " criteria passed\n";
    if (failed) throw ValidationFailure{};
  }
};

struct Transcribe {
  std::string input, spec = "toy", weights, output, dump_dir;
  int stages = 0;
  FrontendFlags ff;
  DecoderFlags df;

  void add(CLI::App& app) {
    auto* c = app.add_subcommand("transcribe", "WAV + weights -> note events (frontend | infer | decode)");
    c->add_option("input", input, "WAV file")->required();
    c->add_option("--spec", spec, "Model spec: toy, reference, or a spec JSON file")->capture_default_str();
    c->add_option("--weights", weights, "AMTW weight file")->required();
    c->add_option("-o,--out", output, "Output note table or .mid (default: stdout table)");
    c->add_option("--dump-dir", dump_dir, "Also write the input and predicted rolls here");
    c->add_option("--stages", stages, "Run only the first N onset stages");
    ff.add(c);
    df.add(c);
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    amt::TranscribeOptions opt;
    opt.frontend = ff.resolve_config();
    opt.decoder = df.resolve_params();
    opt.threads = g.threads;
    opt.num_stages = stages;
    log_config("transcribe", {{"spec", spec}, {"weights", weights}, {"frontend", frontend_json(opt.frontend)},
                              {"decoder", decoder_json(opt.decoder)}});
    const auto model = load_model(spec, weights);
    const auto t = amt::transcribe(amt::load_wav(input), model, opt);
    if (!dump_dir.empty()) {
      fs::create_directories(dump_dir);
      amt::write_file_bytes((fs::path(dump_dir) / "input.amtr").string(), amt::encode_spectro(t.input));
      for (std::size_t i = 0; i < t.output.onset_stages.size(); ++i)
        amt::save_roll(t.output.onset_stages[i], roll_path(dump_dir, "onset_" + std::to_string(i + 1)));
      amt::save_roll(t.output.velocity, roll_path(dump_dir, "velocity"));
    }
    const auto notes = amt::score_to_notes(t.score);
    if (!output.empty()) amt::save_notes(notes, output);
    emit({{"decoder", decoder_json(opt.decoder)}, {"frames", t.input.num_frames()}, {"events", score_json(t.score)}},
         output.empty() ? amt::write_notes_table(notes)
                        : "wrote " + std::to_string(t.score.events.size()) + " events to " + output + "\n");
  }
};

struct SplitPoints {
  std::string wav, notes;
  double target = 20.0;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("split-points", "Cut points near multiples of --target at zero crossings");
    c->add_option("wav", wav, "WAV file")->required();
    c->add_option("--notes", notes, "Aligned labels; cuts avoid sounding notes");
    c->add_option("--target", target, "Segment length in seconds")->capture_default_str();
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    if (!(target > 0)) throw amt::InvalidParam("--target must be positive");
    log_config("split-points", {{"target", target}});
    const auto w = amt::load_wav(wav);
    const auto seq = notes.empty() ? amt::NoteSequence{} : amt::load_notes(notes);
    const auto r = amt::split_points(w, seq, target);
    for (const auto& m : r.warnings) std::cerr << "warning: " << m << "\n";
    json idx = r.indices;
    std::string text;
    for (auto i : r.indices) text += std::to_string(i) + "\t" + fmt(static_cast<double>(i) / w.sample_rate) + "\n";
    emit({{"sample_rate", w.sample_rate}, {"indices", idx}}, text);
  }
};

struct InitWeights {
  std::string spec = "toy", output;
  double scale = 1.0;
  bool zero = false;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("init-weights", "Write seeded random (or zero) weights for a spec");
    c->add_option("--spec", spec, "toy, reference, or a spec JSON file")->capture_default_str();
    c->add_option("-o,--out", output, "Output AMTW file")->required();
    c->add_option("--scale", scale, "Scale of the random initialization")->capture_default_str();
    c->add_flag("--zero", zero, "All-zero weights");
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    const auto s = load_spec(spec);
    s.validate();
    log_config("init-weights", {{"spec", s.name}, {"seed", g.seed}, {"scale", scale}, {"zero", zero}});
    const auto w = zero ? amt::nn::zero_weights(s) : amt::nn::random_weights(s, g.seed, scale);
    amt::write_file_bytes(output, amt::nn::save_weights(w));
    emit({{"spec", s.name}, {"params", amt::nn::count_params(w)}, {"tensors", w.size()}, {"out", output}},
         "wrote " + std::to_string(amt::nn::count_params(w)) + " parameters (" + s.name + ") to " + output + "\n");
  }
};

struct WriteSpec {
  std::string spec = "toy", output;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("write-spec", "Print or write a model spec as JSON, with its parameter count");
    c->add_option("spec", spec, "toy, reference, or a spec JSON file")->capture_default_str();
    c->add_option("-o,--out", output, "Output file (default: stdout)");
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    const auto s = load_spec(spec);
    s.validate();
    const auto text = s.to_json();
    if (!output.empty()) {
      write_text(output, text + "\n");
      std::cerr << amt::nn::count_params(s) << " parameters\n";
    } else {
      std::cout << text << "\n";
    }
  }
};

struct Fixture {
  std::string out_dir;
  int notes = 12;
  double duration = 3.0;
  void add(CLI::App& app) {
    auto* c = app.add_subcommand("fixture", "Write a seeded synthetic WAV with matching labels");
    c->add_option("-o,--out-dir", out_dir, "Output directory")->required();
    c->add_option("--notes", notes, "Maximum number of notes")->capture_default_str();
    c->add_option("--duration", duration, "Maximum duration in seconds")->capture_default_str();
    commands.push_back({c, [this] { run(); }});
  }
  void run() {
    if (notes < 0 || !(duration > 0)) throw amt::InvalidParam("--notes must be >= 0 and --duration > 0");
    log_config("fixture", {{"seed", g.seed}, {"notes", notes}, {"duration", duration}});
    amt::fixtures::Rng rng(g.seed);
    const auto seq = amt::fixtures::random_sequence(rng, {notes, duration});
    fs::create_directories(out_dir);
    const auto dir = fs::path(out_dir);
    amt::save_wav(amt::fixtures::render(seq), (dir / "fixture.wav").string());
    amt::save_notes(seq, (dir / "fixture.tsv").string());
    amt::save_notes(seq, (dir / "fixture.mid").string());
    emit({{"notes", seq.notes.size()}, {"duration", seq.duration}, {"dir", out_dir}},
         "wrote fixture.wav/.tsv/.mid with " + std::to_string(seq.notes.size()) + " notes to " + out_dir + "\n");
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Automatic music transcription toolkit: labels, frontend, onset/velocity CNN, decoding, evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  g_format_opt = app.add_option("--format", g.format, "Report format")->check(CLI::IsMember({"text", "json"}));
  g_threads_opt = app.add_option("--threads", g.threads, "Worker threads (results do not depend on it)")->check(CLI::Range(1, 256));
  app.add_option("--seed", g.seed, "Seed for fixture generation and weight initialization");
  app.add_option("--config", g.config_path, "JSON config file (default: $AMT_CONFIG)");
  app.add_option("--log-level", g.log_level, "info or debug (debug prints the resolved config)")
      ->check(CLI::IsMember({"info", "debug"}));

  Rollify rollify;
  Frontend frontend;
  Augment augment;
  Infer infer;
  Decode decode;
  Loss loss;
  Eval eval;
  Stats stats;
  ValidateSplits validate;
  Selftest selftest;
  Transcribe transcribe;
  SplitPoints split;
  InitWeights init;
  WriteSpec write_spec;
  Fixture fixture;
  rollify.add(app);
  frontend.add(app);
  augment.add(app);
  infer.add(app);
  decode.add(app);
  loss.add(app);
  eval.add(app);
  stats.add(app);
  validate.add(app);
  selftest.add(app);
  transcribe.add(app);
  split.add(app);
  init.add(app);
  write_spec.add(app);
  fixture.add(app);

  try {
    app.parse(argc, argv);
    load_config();
    for (auto& [sub, action] : commands)
      if (sub->parsed()) action();
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  } catch (const ValidationFailure& f) {
    return f.code;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  } catch (const amt::InvalidParam& e) {
    std::cerr << "invalid parameter: " << e.what() << "\n";
    return kExitUsage;
  } catch (const amt::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitOk;
}
