#include "pll/grid.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <thread>

#include "pll/text.hpp"

namespace pll {

MethodConfig parse_method_token(const std::string& token) {
    MethodConfig m;
    std::string t = text::trim(token);
    if (t.starts_with("lw")) {
        m.method = Method::lw;
        if (t == "lw") return m;
        const auto parts = text::split(t, '-');
        if (parts.size() != 3 || parts[2].size() != 2 || parts[2][0] != 'b') {
            throw std::invalid_argument("bad LW token '" + t + "', expected lw-<sigmoid|ce>-b<0|1|2>");
        }
        m.lw_variant = parse_lw_variant(parts[1]);
        m.beta = static_cast<int>(text::parse_int(parts[2].substr(1)));
        m.validate();
        return m;
    }
    if (t == "pico-nocl") {
        m.method = Method::pico;
        m.pico_contrastive = false;
        return m;
    }
    m.method = parse_method(t);
    return m;
}

namespace {

template <class T>
std::vector<T> parse_list(const std::string& s, T (*parse)(const std::string&)) {
    std::vector<T> out;
    for (const auto& part : text::split(s, ',')) {
        const auto t = text::trim(part);
        if (!t.empty()) out.push_back(parse(t));
    }
    return out;
}

int parse_int_field(const std::string& s) { return static_cast<int>(text::parse_int(s)); }
std::uint64_t parse_u64_field(const std::string& s) {
    const long long v = text::parse_int(s);
    if (v < 0) throw std::invalid_argument("seeds must be >= 0");
    return static_cast<std::uint64_t>(v);
}
double parse_double_field(const std::string& s) { return text::parse_double(s); }

bool parse_flag(const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw std::invalid_argument("expected a boolean, got '" + s + "'");
}

}  // namespace

GridConfig GridConfig::from_key_values(const std::map<std::string, std::string>& kv,
                                       const std::filesystem::path& base_dir) {
    static const char* known[] = {"data",  "methods",   "ld",     "ambiguity",     "q",         "wheel",
                                  "subjects", "folds",  "seeds",  "epochs",        "batch_size", "learning_rate",
                                  "momentum", "weight_decay", "scheduler", "threads", "track_best_epoch"};
    for (const auto& [key, value] : kv) {
        if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
            std::end(known)) {
            throw std::invalid_argument("grid config: unknown key '" + key + "'");
        }
    }
    auto get = [&kv](const std::string& key, const std::string& fallback) {
        auto it = kv.find(key);
        return it == kv.end() ? fallback : it->second;
    };
    auto resolve = [&base_dir](const std::string& p) {
        std::filesystem::path path(p);
        return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };

    GridConfig g;
    if (kv.count("data")) g.data = resolve(kv.at("data"));

    const std::string ld = get("ld", "off");
    if (ld != "off" && ld != "on" && ld != "both") throw std::invalid_argument("grid config: ld must be off, on or both");
    for (const auto& raw : text::split(get("methods", "dnpl"), ',')) {
        std::string token = text::trim(raw);
        if (token.empty()) continue;
        bool pinned = false;
        if (token.ends_with("+ld")) {
            pinned = true;
            token = token.substr(0, token.size() - 3);
        }
        MethodConfig m = parse_method_token(token);
        if (pinned || !m.has_ld()) {
            m.ld = pinned;
            g.methods.push_back(m);
            continue;
        }
        if (ld == "off" || ld == "both") {
            m.ld = false;
            g.methods.push_back(m);
        }
        if (ld == "on" || ld == "both") {
            m.ld = true;
            g.methods.push_back(m);
        }
    }
    if (g.methods.empty()) throw std::invalid_argument("grid config: no methods");

    const std::string mode = get("ambiguity", "uniform");
    if (mode == "uniform") {
        for (double q : parse_list<double>(get("q", "0.2, 0.4, 0.6, 0.8, 0.9, 0.95"), parse_double_field)) {
            AmbiguitySpec a;
            a.q = q;
            g.ambiguities.push_back(a);
        }
    } else if (mode == "similarity") {
        AmbiguitySpec a;
        a.mode = AmbiguitySpec::Mode::similarity;
        if (kv.count("wheel")) a.wheel = EmotionWheel::load(resolve(kv.at("wheel")));
        g.ambiguities.push_back(a);
    } else {
        throw std::invalid_argument("grid config: ambiguity must be uniform or similarity");
    }
    if (g.ambiguities.empty()) throw std::invalid_argument("grid config: no ambiguity settings");

    const std::string subjects = get("subjects", "all");
    if (subjects != "all") g.subjects = parse_list<int>(subjects, parse_int_field);
    if (kv.count("folds")) g.folds = parse_list<int>(kv.at("folds"), parse_int_field);
    if (kv.count("seeds")) g.seeds = parse_list<std::uint64_t>(kv.at("seeds"), parse_u64_field);
    if (g.folds.empty() || g.seeds.empty()) throw std::invalid_argument("grid config: folds and seeds must be non-empty");

    g.base.epochs = static_cast<int>(text::parse_int(get("epochs", "30")));
    g.base.batch_size = static_cast<std::size_t>(text::parse_int(get("batch_size", "8")));
    g.base.learning_rate = text::parse_double(get("learning_rate", "0.01"));
    g.base.momentum = text::parse_double(get("momentum", "0.9"));
    g.base.weight_decay = text::parse_double(get("weight_decay", "1e-4"));
    g.base.scheduler = parse_schedule(get("scheduler", "cosine")) == Schedule::cosine;
    g.base.track_best_epoch = parse_flag(get("track_best_epoch", "false"));
    const long long threads = text::parse_int(get("threads", "1"));
    if (threads < 1) throw std::invalid_argument("grid config: threads must be >= 1");
    g.threads = static_cast<std::size_t>(threads);
    return g;
}

GridConfig GridConfig::load(const std::filesystem::path& path) {
    return from_key_values(text::read_key_values(path.string()), path.parent_path());
}

AggregateTable aggregate_runs(const std::vector<GridRun>& runs) {
    struct Acc {
        AggregateCell cell;
        std::vector<double> values;
    };
    std::vector<Acc> cells;
    std::map<std::string, std::size_t> index;
    for (const auto& r : runs) {
        const std::string key = r.method + '|' + (r.ld ? "1" : "0") + '|' + r.ambiguity;
        auto [it, inserted] = index.emplace(key, cells.size());
        if (inserted) cells.push_back({AggregateCell{r.method, r.ld, r.ambiguity, 0, 0, 0.0, 0.0}, {}});
        auto& acc = cells[it->second];
        if (r.ok) {
            acc.values.push_back(r.accuracy);
        } else {
            ++acc.cell.failed;
        }
    }
    AggregateTable table;
    for (auto& acc : cells) {
        acc.cell.runs = acc.values.size();
        mean_std(acc.values, acc.cell.mean, acc.cell.std);
        table.cells.push_back(acc.cell);
    }
    return table;
}

GridOutcome run_grid(const GridConfig& config, const Dataset& data) {
    const auto subjects = config.subjects.empty() ? data.subjects() : config.subjects;
    if (subjects.empty()) throw std::invalid_argument("run_grid: dataset has no subjects");

    // Candidate sets depend on (ambiguity, seed) only, so every method and LD toggle sees the same sets.
    std::map<std::pair<std::size_t, std::uint64_t>, std::vector<CandidateSet>> candidates;
    for (std::size_t a = 0; a < config.ambiguities.size(); ++a) {
        for (auto seed : config.seeds) candidates[{a, seed}] = generate_candidates(data, config.ambiguities[a], seed);
    }
    std::vector<CandidateSet> singletons;
    for (const auto& s : data.samples) singletons.push_back(singleton_candidates(s.label, kEmotionCount));

    struct Job {
        RunSpec spec;
        const std::vector<CandidateSet>* labels;
        GridRun run;
    };
    std::vector<Job> jobs;
    for (const auto& m : config.methods) {
        const bool supervised = m.method == Method::supervised;
        const std::size_t n_amb = supervised ? 1 : config.ambiguities.size();
        for (std::size_t a = 0; a < n_amb; ++a) {
            for (int subject : subjects) {
                for (int fold : config.folds) {
                    for (auto seed : config.seeds) {
                        Job job;
                        job.spec = config.base;
                        job.spec.method = m;
                        job.spec.subject = subject;
                        job.spec.fold = fold;
                        job.spec.seed = seed;
                        const auto& amb = config.ambiguities[a];
                        job.labels = supervised ? &singletons : &candidates.at({a, seed});
                        job.spec.labels_source =
                            supervised ? "ground-truth"
                                       : (amb.mode == AmbiguitySpec::Mode::uniform ? uniform_provenance(amb.q)
                                                                                   : similarity_provenance(amb.wheel)) +
                                             ";seed=" + std::to_string(seed);
                        job.run.method = m.variant_key();
                        job.run.ld = m.ld;
                        job.run.ambiguity = supervised ? "-" : amb.key();
                        job.run.subject = subject;
                        job.run.fold = fold;
                        job.run.seed = seed;
                        jobs.push_back(std::move(job));
                    }
                }
            }
        }
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            auto& job = jobs[i];
            try {
                const auto result = train_run(job.spec, data, *job.labels);
                job.run.ok = true;
                job.run.accuracy = result.accuracy;
                job.run.result_json = result_to_json(result);
            } catch (const std::exception& e) {
                job.run.ok = false;
                job.run.error = e.what();
            }
        }
    };
    const std::size_t n_threads = std::min(config.threads, std::max<std::size_t>(jobs.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    GridOutcome out;
    for (auto& job : jobs) out.runs.push_back(std::move(job.run));
    out.table = aggregate_runs(out.runs);
    return out;
}

namespace {

std::string run_id(const GridRun& r) {
    std::string amb = r.ambiguity;
    std::replace_if(amb.begin(), amb.end(), [](char c) { return c == '=' || c == '-' || c == '.'; }, '_');
    return r.method + (r.ld ? "_ld" : "_nold") + "_" + amb + "_s" + std::to_string(r.subject) + "_f" +
           std::to_string(r.fold) + "_seed" + std::to_string(r.seed);
}

std::string csv_safe(std::string s) {
    std::replace_if(s.begin(), s.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, ';');
    return s;
}

}  // namespace

void write_grid_outputs(const std::filesystem::path& dir, const GridOutcome& outcome) {
    std::filesystem::create_directories(dir / "runs");
    std::ofstream runs(dir / "runs.csv");
    if (!runs) throw std::runtime_error("cannot write " + (dir / "runs.csv").string());
    runs << "method,ld,ambiguity,subject,fold,seed,status,accuracy,error\n";
    for (const auto& r : outcome.runs) {
        runs << r.method << ',' << (r.ld ? "on" : "off") << ',' << r.ambiguity << ',' << r.subject << ',' << r.fold
             << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
             << (r.ok ? text::format_double(r.accuracy) : std::string()) << ',' << csv_safe(r.error) << '\n';
        if (r.ok) {
            std::ofstream js(dir / "runs" / (run_id(r) + ".json"), std::ios::binary);
            js << r.result_json;
        }
    }
    write_aggregate_csv(dir / "aggregate.csv", outcome.table);
}

}  // namespace pll
