#include "prescribe/fixtures.hpp"

#include <random>

namespace prescribe {

namespace {

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

std::string csv_field(const std::string& text) {
  if (text.find_first_of(",\"\n") == std::string::npos) return text;
  std::string out = "\"";
  for (char c : text) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

Fixture finish(DatasetMetadata meta, std::string csv) {
  meta.path = "data.csv";
  validate(meta);
  auto table = parse_table(meta, csv);
  return {std::move(meta), std::move(table), std::move(csv)};
}

}  // namespace

Fixture bank_fixture(std::size_t n, std::uint64_t seed) {
  DatasetMetadata meta;
  meta.title = "Bank telemarketing (synthetic)";
  meta.action_column = "CAMPAIGN";
  meta.outcome_column = "CONVERSION";
  meta.columns = {
      {"age", Dtype::numeric, "age of the client in years"},
      {"job", Dtype::categorical, "type of job of the client"},
      {"loan", Dtype::boolean, "whether the client has a personal loan"},
      {"euribor3m", Dtype::numeric, "euribor 3 month rate at the time of contact"},
      {"CAMPAIGN", Dtype::numeric, "number of calls made to the client during this campaign"},
      {"CONVERSION", Dtype::boolean, "whether the client subscribed a term deposit"},
  };

  static const double rates[] = {4.964, 4.961, 4.857, 4.191, 1.313, 1.266, 0.881, 1.405};
  static const double weights[] = {0.25, 0.12, 0.15, 0.08, 0.12, 0.10, 0.08, 0.10};
  static const char* jobs[] = {"admin", "blue-collar", "technician", "services",
                               "management", "retired", "student", "entrepreneur"};

  std::mt19937_64 rng(seed);
  std::string csv = "age,job,loan,euribor3m,CAMPAIGN,CONVERSION\n";
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    if (i > 0) {
      double u = uniform01(rng), acc = 0.0;
      for (r = 0; r + 1 < std::size(rates); ++r) {
        acc += weights[r];
        if (u < acc) break;
      }
    }
    const double euribor = rates[r];
    const int age = 18 + static_cast<int>(rng() % 63);
    const std::string job = jobs[rng() % std::size(jobs)];
    const bool loan = uniform01(rng) < 0.3;
    const bool high = euribor >= 4.0;
    const int calls = static_cast<int>(rng() % (high ? 7 : 4));
    const double lift = (high ? 0.018 * calls : 0.035 * calls - 0.006 * calls * calls) * (loan ? 0.3 : 1.0);
    const double p = 0.01 + (euribor < 2.0 ? 0.10 : 0.0) + ((job == "retired" || job == "student") ? 0.05 : 0.0) -
                     (loan ? 0.06 : 0.0) + lift;
    const bool converted = uniform01(rng) < p;
    csv += std::to_string(age) + "," + csv_field(job) + "," + (loan ? "true" : "false") + "," +
           render_number(euribor) + "," + std::to_string(calls) + "," + (converted ? "true" : "false") + "\n";
  }
  return finish(std::move(meta), std::move(csv));
}

Fixture noiseless_scm(std::size_t n, std::uint64_t seed) {
  DatasetMetadata meta;
  meta.title = "Noiseless linear model";
  meta.action_column = "A";
  meta.outcome_column = "Y";
  meta.columns = {{"X1", Dtype::numeric, "covariate"},
                  {"A", Dtype::numeric, "action"},
                  {"Y", Dtype::numeric, "outcome"}};
  std::mt19937_64 rng(seed);
  std::string csv = "X1,A,Y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int x = static_cast<int>(rng() % 3);
    const int a = static_cast<int>(rng() % 4);
    csv += std::to_string(x) + "," + std::to_string(a) + "," + std::to_string(2 * a + 3 * x) + "\n";
  }
  return finish(std::move(meta), std::move(csv));
}

Fixture confounded_scm(std::size_t n, std::uint64_t seed) {
  DatasetMetadata meta;
  meta.title = "Confounded null effect";
  meta.action_column = "A";
  meta.outcome_column = "Y";
  meta.columns = {{"X1", Dtype::numeric, "confounder"},
                  {"A", Dtype::numeric, "action"},
                  {"Y", Dtype::numeric, "outcome"}};
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::string csv = "X1,A,Y\n";
  for (std::size_t i = 0; i < n; ++i) {
    const int x = uniform01(rng) < 0.5 ? 1 : 0;
    const int a = uniform01(rng) < 0.2 + 0.6 * x ? 1 : 0;
    const double y = x + noise(rng);
    csv += std::to_string(x) + "," + std::to_string(a) + "," + render_number(y) + "\n";
  }
  return finish(std::move(meta), std::move(csv));
}

std::string to_csv(const DataTable& table) {
  std::string out;
  const auto cols = table.columns();
  for (std::size_t c = 0; c < cols.size(); ++c) out += (c ? "," : "") + csv_field(cols[c].spec.name);
  out += "\n";
  for (std::size_t r = 0; r < table.row_count(); ++r) {
    for (std::size_t c = 0; c < cols.size(); ++c) {
      if (c) out += ",";
      if (const auto& cell = cols[c].cells[r]) out += csv_field(render_literal(*cell));
    }
    out += "\n";
  }
  return out;
}

std::filesystem::path write_fixture(const Fixture& fixture, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "data.csv", fixture.csv);
  auto meta = fixture.meta;
  meta.path = "data.csv";
  const auto path = dir / "metadata.json";
  write_file(path, to_json(meta).dump(2) + "\n");
  return path;
}

std::string demo_script() {
  const json rules[] = {
      {{"match", "missing parameters: [num_rules, average_budget]"},
       {"respond", "Happy to help! How many rules should the policy use, and what average budget per customer can I spend?"}},
      {{"match", "missing parameters: [num_rules]"},
       {"respond", "Sure. How many rules should the policy use?"}},
      {{"match", "missing parameters: [average_budget]"},
       {"respond", "Got it. What average budget per customer should I stay within?"}},
      {{"match", "missing parameters"}, {"respond", "Could you provide the remaining parameters?"}},
      {{"match", "Inform the user you are running a tool"},
       {"respond", "On it! I am running that analysis in the background and will share the result here."}},
      {{"match", "Simply respond to the user that the result is"}, {"respond", "Here is what I found: {{result}}."}},
      {{"match", ""},
       {"respond",
        "I can rank the most important features, estimate how CAMPAIGN affects CONVERSION (also under conditions "
        "you specify), show the current policy and optimize a new calling policy within a budget."}},
  };
  std::string out;
  for (const auto& r : rules) out += r.dump() + "\n";
  return out;
}

}  // namespace prescribe
