#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "duse/harness.hpp"

namespace duse::harness {

namespace {

namespace pt = boost::property_tree;

const std::map<std::string, std::set<std::string>>& known_keys() {
    static const std::map<std::string, std::set<std::string>> keys = {
        {"data", {"schemes", "snr_min_db", "snr_max_db", "snr_step_db", "per_class_per_snr", "signal_len", "seed"}},
        {"split", {"target_frac", "test_frac", "snr_min_exclusive_db", "seed"}},
        {"expand", {"method", "rate", "rounds", "epochs", "balance", "seed"}},
        {"eval", {"epochs", "seeds", "lr", "batch", "seed"}},
    };
    return keys;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    const auto e = s.find_last_not_of(" \t\r\n");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

template <class T>
bool parse_number(const std::string& text, T& out) {
    const std::string t = trim(text);
    if constexpr (std::is_floating_point_v<T>) {
        try {
            std::size_t used = 0;
            out = static_cast<T>(std::stod(t, &used));
            return used == t.size();
        } catch (...) {
            return false;
        }
    } else {
        const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
        return ec == std::errc() && ptr == t.data() + t.size();
    }
}

bool parse_bool(const std::string& text, bool& out) {
    const std::string t = trim(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return out = true, true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return out = false, true;
    return false;
}

class reader {
public:
    explicit reader(const pt::ptree& tree) : tree_(tree) {}

    template <class T>
    void number(const char* section, const char* key, T& out) {
        if (const auto v = get(section, key)) {
            if (!parse_number(*v, out)) problems.push_back(where(section, key) + ": not a valid number: '" + *v + "'");
        }
    }

    void boolean(const char* section, const char* key, bool& out) {
        if (const auto v = get(section, key))
            if (!parse_bool(*v, out)) problems.push_back(where(section, key) + ": not a boolean: '" + *v + "'");
    }

    std::optional<std::string> get(const char* section, const char* key) const {
        const auto sec = tree_.get_child_optional(section);
        if (!sec) return std::nullopt;
        const auto v = sec->get_optional<std::string>(key);
        if (!v) return std::nullopt;
        return trim(*v);
    }

    static std::string where(const char* section, const char* key) { return std::string("[") + section + "] " + key; }

    std::vector<std::string> problems;

private:
    const pt::ptree& tree_;
};

}  // namespace

config_error::config_error(std::vector<std::string> problems)
    : invalid_input([&] {
          std::string msg = "invalid experiment config:";
          for (const auto& p : problems) msg += "\n  " + p;
          return msg;
      }()),
      problems_(std::move(problems)) {}

experiment_config parse_config(const std::string& ini_text) {
    pt::ptree tree;
    try {
        std::istringstream in(ini_text);
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw config_error({std::string("syntax: ") + e.what()});
    }

    reader rd(tree);
    for (const auto& [section, body] : tree) {
        const auto it = known_keys().find(section);
        if (it == known_keys().end()) {
            rd.problems.push_back("unknown section [" + section + "]");
            continue;
        }
        for (const auto& [key, value] : body)
            if (!it->second.contains(key)) rd.problems.push_back("unknown key [" + section + "] " + key);
    }

    experiment_config c;
    if (const auto v = rd.get("data", "schemes")) {
        c.data.schemes.clear();
        for (const auto& item : split_list(*v)) {
            try {
                c.data.schemes.push_back(sigsynth::parse_modulation(item));
            } catch (const invalid_input& e) {
                rd.problems.push_back("[data] schemes: " + std::string(e.what()));
            }
        }
    }
    rd.number("data", "snr_min_db", c.data.snr_min_db);
    rd.number("data", "snr_max_db", c.data.snr_max_db);
    rd.number("data", "snr_step_db", c.data.snr_step_db);
    rd.number("data", "per_class_per_snr", c.data.per_class_per_snr);
    rd.number("data", "signal_len", c.data.signal_len);
    rd.number("data", "seed", c.data.seed);

    rd.number("split", "target_frac", c.target_frac);
    rd.number("split", "test_frac", c.test_frac);
    rd.number("split", "snr_min_exclusive_db", c.snr_min_exclusive_db);
    rd.number("split", "seed", c.split_seed);

    if (const auto v = rd.get("expand", "method")) {
        c.methods.clear();
        for (const auto& item : split_list(*v)) {
            try {
                c.methods.push_back(expansion::parse_method(item));
            } catch (const invalid_input& e) {
                rd.problems.push_back("[expand] method: " + std::string(e.what()));
            }
        }
    }
    if (const auto v = rd.get("expand", "rate")) {
        c.rates.clear();
        for (const auto& item : split_list(*v)) {
            double r = 0.0;
            if (!parse_number(item, r) || !(r > 0.0 && r <= 1.0))
                rd.problems.push_back("[expand] rate: '" + item + "' is not in (0, 1]");
            else
                c.rates.push_back(r);
        }
    }
    rd.number("expand", "rounds", c.rounds);
    rd.number("expand", "epochs", c.expand_epochs);
    rd.boolean("expand", "balance", c.balance);
    rd.number("expand", "seed", c.expand_seed);

    rd.number("eval", "epochs", c.eval.epochs);
    rd.number("eval", "seeds", c.eval.seeds);
    rd.number("eval", "lr", c.eval.learning_rate);
    rd.number("eval", "batch", c.eval.batch_size);
    rd.number("eval", "seed", c.eval.base_seed);

    try {
        c.data.validate();
    } catch (const invalid_input& e) {
        rd.problems.push_back(std::string("[data] ") + e.what());
    }
    if (!(c.target_frac > 0.0) || !(c.test_frac > 0.0) || !(c.target_frac + c.test_frac < 1.0))
        rd.problems.push_back("[split] need 0 < target_frac, 0 < test_frac, target_frac + test_frac < 1");
    if (c.methods.empty()) rd.problems.push_back("[expand] method: no methods given");
    if (c.rates.empty()) rd.problems.push_back("[expand] rate: no rates given");
    if (c.rounds == 0) rd.problems.push_back("[expand] rounds must be positive");
    if (c.expand_epochs == 0) rd.problems.push_back("[expand] epochs must be positive");
    if (c.eval.seeds == 0) rd.problems.push_back("[eval] seeds must be positive");
    if (c.eval.batch_size == 0) rd.problems.push_back("[eval] batch must be positive");
    if (!(c.eval.learning_rate > 0.0)) rd.problems.push_back("[eval] lr must be positive");

    if (!rd.problems.empty()) throw config_error(std::move(rd.problems));
    return c;
}

experiment_config load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw invalid_input("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str());
}

std::string experiment_config::canonical() const {
    std::ostringstream out;
    out.precision(17);
    out << "[data]\nschemes=";
    for (std::size_t i = 0; i < data.schemes.size(); ++i) out << (i ? "," : "") << sigsynth::name(data.schemes[i]);
    out << "\nsnr_min_db=" << data.snr_min_db << "\nsnr_max_db=" << data.snr_max_db
        << "\nsnr_step_db=" << data.snr_step_db << "\nper_class_per_snr=" << data.per_class_per_snr
        << "\nsignal_len=" << data.signal_len << "\nseed=" << data.seed;
    out << "\n[split]\ntarget_frac=" << target_frac << "\ntest_frac=" << test_frac
        << "\nsnr_min_exclusive_db=" << snr_min_exclusive_db << "\nseed=" << split_seed;
    out << "\n[expand]\nmethod=";
    for (std::size_t i = 0; i < methods.size(); ++i) out << (i ? "," : "") << expansion::name(methods[i]);
    out << "\nrate=";
    for (std::size_t i = 0; i < rates.size(); ++i) out << (i ? "," : "") << rates[i];
    out << "\nrounds=" << rounds << "\nepochs=" << expand_epochs << "\nbalance=" << (balance ? "true" : "false")
        << "\nseed=" << expand_seed;
    out << "\n[eval]\nepochs=" << eval.epochs << "\nseeds=" << eval.seeds << "\nlr=" << eval.learning_rate
        << "\nbatch=" << eval.batch_size << "\nseed=" << eval.base_seed << "\n";
    return out.str();
}

std::string experiment_config::experiment_id() const { return digest_hex(fnv1a64(canonical())); }

}  // namespace duse::harness
