#include "morphoprobe/report.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <tuple>

#include "morphoprobe/json_io.hpp"
#include "morphoprobe/suite.hpp"

namespace morphoprobe {

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string file_stem(std::string s) {
  for (char& c : s) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return s;
}

auto result_key(const ExperimentResult& r) {
  return std::make_tuple(r.spec.model_id, r.spec.task, r.spec.masking_label(), r.spec.hash());
}

std::vector<ExperimentResult> sorted(std::vector<ExperimentResult> results) {
  std::sort(results.begin(), results.end(),
            [](const ExperimentResult& a, const ExperimentResult& b) { return result_key(a) < result_key(b); });
  return results;
}

std::vector<EffectRecord> sorted(std::vector<EffectRecord> effects) {
  std::sort(effects.begin(), effects.end(), [](const EffectRecord& a, const EffectRecord& b) {
    return std::tie(a.model_id, a.task, a.perturbation) < std::tie(b.model_id, b.task, b.perturbation);
  });
  return effects;
}

std::vector<ShapleyProfile> sorted(std::vector<ShapleyProfile> profiles) {
  std::sort(profiles.begin(), profiles.end(), [](const ShapleyProfile& a, const ShapleyProfile& b) {
    return std::tie(a.model_id, a.task) < std::tie(b.model_id, b.task);
  });
  return profiles;
}

}  // namespace

bool ReportInputs::empty() const {
  return results.empty() && effects.empty() && profiles.empty() &&
         (!cooccurrence || cooccurrence->labels.empty());
}

// ---- tables --------------------------------------------------------------------------

std::string results_csv(const std::vector<ExperimentResult>& results) {
  std::ostringstream out;
  out << "model_id,task,perturbation,variant,layers,train_fraction,seed_index,seed,pooling,dev_accuracy,"
         "test_accuracy,epochs,best_epoch,diverged\n";
  for (const auto& r : sorted(results)) {
    for (const auto& s : r.seeds) {
      out << csv_field(r.spec.model_id) << ',' << csv_field(r.spec.task) << ',' << csv_field(r.spec.masking_label())
          << ',' << r.spec.variant.name << ',' << r.spec.layers.name() << ',' << format_double(r.spec.train_fraction)
          << ',' << s.index << ',' << s.seed << ',' << to_string(s.pooling) << ',' << format_double(s.dev_accuracy)
          << ',' << format_double(s.test_accuracy) << ',' << s.epochs << ',' << s.best_epoch << ','
          << (s.diverged ? 1 : 0) << '\n';
    }
  }
  return out.str();
}

Json results_summary(const std::vector<ExperimentResult>& results) {
  Json out = Json::array();
  for (const auto& r : sorted(results)) {
    out.push_back({{"model_id", r.spec.model_id},
                   {"task", r.spec.task},
                   {"perturbation", r.spec.masking_label()},
                   {"variant", r.spec.variant.name},
                   {"layers", r.spec.layers.name()},
                   {"train_fraction", r.spec.train_fraction},
                   {"spec_hash", r.spec.hash()},
                   {"n_seeds", r.seeds.size()},
                   {"valid_seeds", r.valid_seeds()},
                   {"mean_test", r.mean_test},
                   {"std_test", r.std_test},
                   {"mean_dev", r.mean_dev},
                   {"mean_epochs", r.mean_epochs},
                   {"mean_layer_weights", r.mean_layer_weights},
                   {"warnings", r.warnings}});
  }
  return out;
}

std::string effects_csv(const std::vector<EffectRecord>& effects) {
  std::ostringstream out;
  out << "model_id,task,perturbation,effect\n";
  for (const auto& e : sorted(effects)) {
    out << csv_field(e.model_id) << ',' << csv_field(e.task) << ',' << csv_field(e.perturbation) << ','
        << format_double(e.effect) << '\n';
  }
  return out.str();
}

std::string effect_means_csv(const std::vector<EffectRecord>& effects) {
  std::map<std::pair<std::string, std::string>, std::pair<double, int>> acc;
  for (const auto& e : effects) {
    auto& [sum, n] = acc[{e.model_id, e.perturbation}];
    sum += e.effect;
    ++n;
  }
  std::ostringstream out;
  out << "model_id,perturbation,mean_effect,n_tasks\n";
  for (const auto& [key, v] : acc) {
    out << csv_field(key.first) << ',' << csv_field(key.second) << ',' << format_double(v.first / v.second) << ','
        << v.second << '\n';
  }
  return out.str();
}

std::string shapley_csv(const std::vector<ShapleyProfile>& profiles) {
  std::ostringstream out;
  out << "model_id,task";
  for (int p = 0; p < kPlayerCount; ++p) out << ",phi[" << player_name(p) << ']';
  out << ",left,target,right,left_right_ratio\n";
  for (const auto& pr : sorted(profiles)) {
    out << csv_field(pr.model_id) << ',' << csv_field(pr.task);
    for (double v : pr.phi) out << ',' << format_double(v);
    const ShapleySummary s = pr.summary();
    out << ',' << format_double(s.left) << ',' << format_double(s.target) << ',' << format_double(s.right) << ','
        << format_double(s.left_right_ratio) << '\n';
  }
  return out.str();
}

// ---- figures -------------------------------------------------------------------------

std::string shapley_bar_svg(const ShapleyProfile& profile, const std::string& title) {
  constexpr double kWidth = 480, kHeight = 260, kLeft = 40, kTop = 30, kPlot = 180, kBar = 40;
  double hi = 0.0, lo = 0.0;
  for (double v : profile.phi) {
    if (std::isfinite(v)) {
      hi = std::max(hi, v);
      lo = std::min(lo, v);
    }
  }
  if (hi - lo <= 0.0) hi = 1.0;
  const double scale = kPlot / (hi - lo);
  const double zero = kTop + hi * scale;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
      << "\" viewBox=\"0 0 " << kWidth << ' ' << kHeight << "\">\n";
  out << "<text x=\"" << kWidth / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << xml_escape(title)
      << "</text>\n";
  for (int p = 0; p < kPlayerCount; ++p) {
    const double v = profile.phi[static_cast<std::size_t>(p)];
    const double h = std::isfinite(v) ? std::abs(v) * scale : 0.0;
    const double x = kLeft + p * (kBar + 8);
    const double y = v >= 0 ? zero - h : zero;
    out << "<rect class=\"bar\" data-player=\"" << xml_escape(player_name(p)) << "\" data-value=\""
        << format_double(v) << "\" x=\"" << fixed2(x) << "\" y=\"" << fixed2(y) << "\" width=\"" << kBar
        << "\" height=\"" << fixed2(h) << "\" fill=\"" << (p == 4 ? "#c0504d" : "#4f81bd") << "\"/>\n";
    out << "<text x=\"" << fixed2(x + kBar / 2) << "\" y=\"" << fixed2(kTop + kPlot + 20)
        << "\" text-anchor=\"middle\" font-size=\"11\">" << xml_escape(player_name(p)) << "</text>\n";
  }
  out << "<line x1=\"" << kLeft - 4 << "\" y1=\"" << fixed2(zero) << "\" x2=\"" << kWidth - 8 << "\" y2=\""
      << fixed2(zero) << "\" stroke=\"black\"/>\n";
  out << "</svg>\n";
  return out.str();
}

std::vector<std::size_t> family_order(const std::vector<std::string>& labels,
                                      const std::map<std::string, std::string>& families) {
  const auto family = [&](const std::string& label) {
    const auto it = families.find(label);
    return it == families.end() ? std::string("\x7f" "other") : it->second;
  };
  std::vector<std::size_t> order(labels.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::make_pair(family(labels[a]), labels[a]) < std::make_pair(family(labels[b]), labels[b]);
  });
  return order;
}

std::string cooccurrence_svg(const CooccurrenceMatrix& matrix, const std::map<std::string, std::string>& families) {
  constexpr double kCell = 14, kMargin = 110;
  const std::size_t n = matrix.labels.size();
  const std::vector<std::size_t> order = family_order(matrix.labels, families);
  const auto family_of = [&](std::size_t i) {
    const auto it = families.find(matrix.labels[i]);
    return it == families.end() ? std::string("other") : it->second;
  };
  const double size = kMargin + kCell * static_cast<double>(n) + 10;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed2(size) << "\" height=\"" << fixed2(size)
      << "\" viewBox=\"0 0 " << fixed2(size) << ' ' << fixed2(size) << "\">\n";
  for (std::size_t a = 0; a < n; ++a) {
    const std::size_t i = order[a];
    const double pos = kMargin + kCell * static_cast<double>(a);
    out << "<text class=\"row\" x=\"" << fixed2(kMargin - 4) << "\" y=\"" << fixed2(pos + kCell - 3)
        << "\" text-anchor=\"end\" font-size=\"10\" data-family=\"" << xml_escape(family_of(i)) << "\">"
        << xml_escape(matrix.labels[i]) << "</text>\n";
    out << "<text class=\"col\" transform=\"translate(" << fixed2(pos + kCell - 3) << ',' << fixed2(kMargin - 4)
        << ") rotate(-90)\" font-size=\"10\">" << xml_escape(matrix.labels[i]) << "</text>\n";
  }
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      const int count = matrix.counts[order[a]][order[b]];
      const double share = matrix.runs > 0 ? static_cast<double>(count) / matrix.runs : 0.0;
      const int shade = static_cast<int>(std::lround(255.0 * (1.0 - share)));
      out << "<rect class=\"cell\" data-count=\"" << count << "\" x=\""
          << fixed2(kMargin + kCell * static_cast<double>(b)) << "\" y=\""
          << fixed2(kMargin + kCell * static_cast<double>(a)) << "\" width=\"" << kCell << "\" height=\"" << kCell
          << "\" fill=\"rgb(" << shade << ',' << shade << ',' << shade << ")\"/>\n";
    }
  }
  for (std::size_t a = 1; a < n; ++a) {
    if (family_of(order[a]) == family_of(order[a - 1])) continue;
    const double pos = kMargin + kCell * static_cast<double>(a);
    const double end = kMargin + kCell * static_cast<double>(n);
    out << "<line class=\"separator\" x1=\"" << fixed2(kMargin) << "\" y1=\"" << fixed2(pos) << "\" x2=\""
        << fixed2(end) << "\" y2=\"" << fixed2(pos) << "\" stroke=\"#c0504d\" stroke-width=\"1.5\"/>\n";
    out << "<line class=\"separator\" x1=\"" << fixed2(pos) << "\" y1=\"" << fixed2(kMargin) << "\" x2=\""
        << fixed2(pos) << "\" y2=\"" << fixed2(end) << "\" stroke=\"#c0504d\" stroke-width=\"1.5\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

// ---- loading -------------------------------------------------------------------------

ReportInputs load_report_inputs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("no such directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (auto it = std::filesystem::recursive_directory_iterator(dir); it != std::filesystem::recursive_directory_iterator();
       ++it) {
    if (it->is_directory() && it->path().filename() == "ablation") {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file() && it->path().extension() == ".json") files.push_back(it->path());
  }
  std::sort(files.begin(), files.end());

  ReportInputs in;
  for (const auto& f : files) {
    const std::string name = f.filename().string();
    if (name == "coalitions.json" || name == "manifest.json") continue;
    const Json j = read_json_file(f);
    if (name == "shapley.json") {
      in.profiles.push_back(ShapleyProfile::from_json(j));
    } else if (name == "cooccurrence.json") {
      in.cooccurrence = CooccurrenceMatrix::from_json(j);
    } else if (j.is_object() && j.contains("spec") && j.contains("seeds")) {
      in.results.push_back(ExperimentResult::from_json(j));
    }
  }
  return in;
}

// ---- emission ------------------------------------------------------------------------

std::vector<std::filesystem::path> emit_report(const ReportInputs& inputs, const std::filesystem::path& out_dir,
                                               std::ostream& warnings) {
  std::vector<std::filesystem::path> written;
  if (inputs.empty()) {
    warnings << "warning: no results to report; nothing written\n";
    return written;
  }
  const auto write = [&](const std::string& name, const std::string& text) {
    const std::filesystem::path p = out_dir / name;
    write_text_file(p, text);
    written.push_back(p);
  };

  if (!inputs.results.empty()) {
    write("results.csv", results_csv(inputs.results));
    write("summary.json", dump_json(results_summary(inputs.results)) + "\n");
  }
  std::vector<EffectRecord> effects = inputs.effects;
  if (effects.empty()) effects = effects_from_results(inputs.results);
  if (!effects.empty()) {
    write("effects.csv", effects_csv(effects));
    write("effect_means.csv", effect_means_csv(effects));
  }
  if (!inputs.profiles.empty()) {
    const std::vector<ShapleyProfile> profiles = sorted(inputs.profiles);
    write("shapley.csv", shapley_csv(profiles));
    std::map<std::string, std::vector<ShapleyProfile>> by_model;
    for (const auto& p : profiles) {
      write("shapley_" + file_stem(p.model_id) + "_" + file_stem(p.task) + ".svg",
            shapley_bar_svg(p, p.model_id + " " + p.task));
      by_model[p.model_id].push_back(p);
    }
    for (const auto& [model, group] : by_model) {
      if (group.size() < 2) continue;
      ShapleyProfile mean = mean_profile(group);
      write("shapley_mean_" + file_stem(model) + ".svg", shapley_bar_svg(mean, model + " mean"));
    }
  }
  if (inputs.cooccurrence && !inputs.cooccurrence->labels.empty()) {
    write("cooccurrence.csv", inputs.cooccurrence->to_csv());
    write("cooccurrence.svg", cooccurrence_svg(*inputs.cooccurrence, inputs.families));
  }
  return written;
}

}  // namespace morphoprobe
