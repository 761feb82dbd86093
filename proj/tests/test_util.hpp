#pragma once

#include <string>

#include "dualdst/corpus.hpp"
#include "dualdst/ontology.hpp"

namespace dualdst::testing {

inline const Ontology& toy5() {
    static Ontology ont = load_ontology(std::string(DUALDST_DATA_DIR) + "/toy5.ontology.json");
    return ont;
}

// Two domains, four slots, vocabulary under 40 tokens; small enough for full
// finite-difference gradient checks.
inline const Ontology& mini_ontology() {
    static Ontology ont = [] {
        nlohmann::json j;
        j["domains"] = {"alpha", "beta"};
        j["slots"]["alpha"] = {"x", "y"};
        j["slots"]["beta"] = {"x", "z"};
        j["values"]["alpha.x"] = {"p", "q", "r"};
        j["values"]["alpha.y"] = {"s", "t", "u"};
        j["values"]["beta.x"] = {"p", "q", "r"};
        j["values"]["beta.z"] = {"v", "w", "o"};
        j["templates"]["acts"] = nlohmann::json::array();
        auto act = [&](const std::string& slot, const std::string& flag) {
            nlohmann::json a;
            a["slots"] = {slot};
            a["system"] = {"want " + flag + " ?", "need " + flag + " ?"};
            a["user"] = {"give " + flag + " .", "take " + flag + " ."};
            j["templates"]["acts"].push_back(a);
        };
        act("alpha.x", "<alpha>-<x>");
        act("alpha.y", "<alpha>-<y>");
        act("beta.x", "<beta>-<x>");
        act("beta.z", "<beta>-<z>");
        return parse_ontology(j);
    }();
    return ont;
}

}  // namespace dualdst::testing
