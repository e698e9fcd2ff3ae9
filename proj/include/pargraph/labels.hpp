#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace pargraph {

// Label vocabularies for the three tiers. Defaults: 27 individual actions,
// 11 social group activities, 7 global activities.
struct LabelVocab {
    std::vector<std::string> individual_actions;
    std::vector<std::string> social_activities;
    std::vector<std::string> global_activities;

    int n_individual() const { return int(individual_actions.size()); }
    int n_social() const { return int(social_activities.size()); }
    int n_global() const { return int(global_activities.size()); }

    void validate() const {
        auto check = [](const std::vector<std::string>& names, const char* tier) {
            if (names.empty()) throw std::invalid_argument(std::string("LabelVocab: empty tier ") + tier);
            std::set<std::string> seen(names.begin(), names.end());
            if (seen.size() != names.size())
                throw std::invalid_argument(std::string("LabelVocab: duplicate name in ") + tier);
        };
        check(individual_actions, "individual");
        check(social_activities, "social");
        check(global_activities, "global");
    }

    static LabelVocab make_default(int n_individual = 27, int n_social = 11, int n_global = 7) {
        LabelVocab v;
        auto fill = [](std::vector<std::string>& out, const char* prefix, int n) {
            for (int i = 0; i < n; ++i) {
                std::string id = std::to_string(i);
                if (id.size() < 2) id = "0" + id;
                out.push_back(std::string(prefix) + "_" + id);
            }
        };
        fill(v.individual_actions, "action", n_individual);
        fill(v.social_activities, "social", n_social);
        fill(v.global_activities, "global", n_global);
        v.validate();
        return v;
    }
};

}  // namespace pargraph
