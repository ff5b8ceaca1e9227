#pragma once

#include <string>
#include <vector>

namespace mtlforge {

// Ordered label inventory for one classification task. The index<->label
// mapping is fixed for the lifetime of a run.
struct LabelSpace {
    std::string task_name;
    std::vector<std::string> labels;

    int num_classes() const { return static_cast<int>(labels.size()); }
    // -1 when the label is unknown.
    int index_of(const std::string& label) const {
        for (size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == label) return static_cast<int>(i);
        return -1;
    }
    const std::string& label_of(int index) const { return labels.at(static_cast<size_t>(index)); }

    void validate() const;
};

}  // namespace mtlforge
