// Copyright 2026 The ProxyV Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <nlohmann/json.hpp>
#include <sstream>

#include "proxyv/cost/cost_model.hpp"

namespace proxyv::cost {

namespace {
std::string format(const char* fmt, auto... args) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, args...);
    return buf;
}
}  // namespace

std::string format_report(const CostReport& r, const ArchSpec& arch) {
    std::ostringstream os;
    os << format("arch: layers=%llu d=%llu f=%llu heads=%llu vocab=%llu\n", (unsigned long long)arch.layers,
                 (unsigned long long)arch.width, (unsigned long long)arch.ffn_width, (unsigned long long)arch.heads,
                 (unsigned long long)arch.vocab);
    os << format("%-5s %-18s %6s %6s %6s %12s %12s %12s %12s %12s %12s %12s %10s %14s\n", "layer", "mode", "n_v",
                 "n_p", "n_t", "q_proj", "k_proj", "v_proj", "o_proj", "scores", "ffn", "module", "adds", "total");
    for (std::size_t l = 0; l < r.layers.size(); ++l) {
        const auto& b = r.layers[l];
        const auto& c = r.counts[l];
        os << format("%-5zu %-18s %6lld %6lld %6lld %12.4e %12.4e %12.4e %12.4e %12.4e %12.4e %12.4e %10.3e %14.6e\n",
                     l, std::string(mode_name(r.schedule[l])).c_str(), (long long)c.vision, (long long)c.proxy,
                     (long long)c.text, (double)b.q_proj, (double)b.k_proj, (double)b.v_proj, (double)b.o_proj,
                     (double)b.scores, (double)b.ffn, (double)b.module, (double)b.additions, (double)b.total());
    }
    os << format("total MACs      %llu\n", (unsigned long long)r.total_macs);
    os << format("total FLOPs     %.6e\n", (double)r.total_flops());
    os << format("baseline FLOPs  %.6e\n", (double)r.baseline_flops());
    os << format("reduction       %.2f%%\n", 100.0 * r.reduction());
    os << format("added params    %llu\n", (unsigned long long)r.added_params);
    os << format("params light_mlp(d=%llu, h=%llu)      %llu\n", (unsigned long long)arch.width,
                 (unsigned long long)arch.light_hidden,
                 (unsigned long long)params_light_mlp(arch.width, arch.light_hidden));
    os << format("params guided_update(d=%llu, h=%llu)  %llu\n", (unsigned long long)arch.width,
                 (unsigned long long)arch.update_hidden,
                 (unsigned long long)params_guided_update(arch.width, arch.update_hidden));
    return os.str();
}

std::string format_paper_suite(const std::vector<PaperRow>& rows) {
    std::ostringstream os;
    os << format("%-46s %9s %8s %6s %s\n", "row", "measured", "target", "tol", "result");
    std::size_t passed = 0;
    for (const auto& r : rows) {
        passed += r.pass() ? 1 : 0;
        os << format("%-46s %8.2f%% %7.1f%% %5.1f %s\n", r.label.c_str(), r.measured, r.target, r.tolerance,
                     r.pass() ? "PASS" : "FAIL");
    }
    os << format("%zu/%zu PASS\n", passed, rows.size());
    return os.str();
}

void to_json(nlohmann::json& j, const LayerBreakdown& b) {
    j = {{"q_proj", b.q_proj}, {"k_proj", b.k_proj}, {"v_proj", b.v_proj}, {"o_proj", b.o_proj},
         {"scores", b.scores}, {"ffn", b.ffn},       {"module", b.module}, {"additions", b.additions},
         {"total_macs", b.total()}, {"flops", b.flops()}};
}

void to_json(nlohmann::json& j, const CostReport& r) {
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t l = 0; l < r.layers.size(); ++l) {
        nlohmann::json e = r.layers[l];
        e["layer"] = l;
        e["mode"] = std::string(mode_name(r.schedule[l]));
        e["vision"] = r.counts[l].vision;
        e["proxy"] = r.counts[l].proxy;
        e["text"] = r.counts[l].text;
        layers.push_back(std::move(e));
    }
    j = {{"layers", layers},
         {"total_macs", r.total_macs},
         {"total_flops", r.total_flops()},
         {"baseline_macs", r.baseline_macs},
         {"baseline_flops", r.baseline_flops()},
         {"reduction", r.reduction()},
         {"added_params", r.added_params}};
}

void to_json(nlohmann::json& j, const PaperRow& r) {
    j = {{"label", r.label},
         {"measured_percent", r.measured},
         {"target_percent", r.target},
         {"tolerance_pp", r.tolerance},
         {"pass", r.pass()}};
}

}  // namespace proxyv::cost
