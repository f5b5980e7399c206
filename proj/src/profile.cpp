#include "dtspike/profile.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <ostream>

#include "dtspike/probe.hpp"

namespace dts {

void EnergyModel::validate() const {
    if (!(e_ac_pj > 0) || !(e_mac_pj > 0) || !(e_check_pj > 0) || !(e_mem_pj > 0))
        throw ConfigError("energy model: all per-operation energies must be positive");
}

namespace {

Probe run_probe(Model& model, const Dataset& sample, int batch_size, int sample_limit, bool drives) {
    if (model.training()) throw InvariantError("profiling requires eval mode");
    if (sample.size() == 0) throw ConfigError("profiling sample is empty");
    Probe probe;
    probe.record_drives = drives;
    const size_t n = std::min(sample.size(), static_cast<size_t>(std::max(1, sample_limit)));
    std::vector<size_t> idx;
    for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
        const size_t count = std::min(static_cast<size_t>(batch_size), n - start);
        idx.resize(count);
        std::iota(idx.begin(), idx.end(), start);
        model.forward(sample.batch(idx), &probe);
    }
    return probe;
}

void atomic_write(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot write " + tmp);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw FormatError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

} // namespace

void recompute_energy(ProfileReport& r) {
    r.energy.validate();
    r.compute_energy_pj = r.embed_macs * r.energy.e_mac_pj + r.scale_mults * r.energy.e_mac_pj +
                          r.sops * r.energy.e_ac_pj + r.check_slots * r.energy.e_check_pj;
    r.memory_energy_pj = (r.potential_accesses + r.weight_accesses) * r.energy.e_mem_pj;
    r.total_energy_pj = r.compute_energy_pj + r.memory_energy_pj;
}

ProfileReport profile(Model& model, const Dataset& sample, const EnergyModel& energy, int batch_size,
                      int sample_limit) {
    energy.validate();
    Probe probe = run_probe(model, sample, batch_size, sample_limit, false);
    const double n = probe.samples;

    ProfileReport r;
    r.energy = energy;
    r.max_steps = model.config().max_steps;
    r.t_avg = model.t_avg();

    double slots = 0, spikes = 0;
    for (const auto& l : probe.lifs) {
        slots += l.spike_slots;
        spikes += l.spikes;
        LayerActivity a;
        a.name = l.name;
        a.neurons = l.neurons;
        a.active_steps = l.active_steps;
        a.spikes_per_neuron = l.neurons > 0 ? l.spikes / (l.neurons * n) : 0;
        r.layers.push_back(std::move(a));
    }
    r.sa_percent = slots > 0 ? 100.0 * spikes / slots : 0.0;

    for (const auto& o : probe.ops) {
        OpProfile p;
        p.name = o.name;
        p.spike_input = o.spike_input;
        p.dense_flops = o.dense_flops;
        r.flops += o.dense_flops;
        if (!o.spike_input) {
            // direct-encoded embedding: identical drive every step, charged once
            r.embed_macs += o.dense_flops;
        } else {
            p.s_avg = o.input_slots > 0 ? o.input_nonzero / (o.input_slots * n) : 0;
            p.sops = o.sops / n;
            p.check_slots = o.presented_slots / n;
            p.scale_mults = o.output_nonzero / n;
            p.executed_steps = n > 0 ? o.executed_step_samples / n : 0;
            r.sops += p.sops;
            r.check_slots += p.check_slots;
            r.scale_mults += p.scale_mults;
        }
        r.ops.push_back(std::move(p));
    }
    for (const auto& l : probe.lifs) r.potential_accesses += 2.0 * l.neurons * l.active_steps;
    r.weight_accesses = r.sops + r.embed_macs;
    recompute_energy(r);
    return r;
}

EnergyRatios compare_energy(const ProfileReport& a, const ProfileReport& baseline) {
    if (!(a.energy == baseline.energy))
        throw InvariantError("compare_energy: reports use different energy models");
    if (baseline.compute_energy_pj == 0 || baseline.memory_energy_pj == 0 ||
        baseline.total_energy_pj == 0)
        throw NumericError("compare_energy: baseline energy is zero, ratio undefined");
    EnergyRatios out;
    out.ce = a.compute_energy_pj / baseline.compute_energy_pj;
    out.me = a.memory_energy_pj / baseline.memory_energy_pj;
    out.te = a.total_energy_pj / baseline.total_energy_pj;
    return out;
}

HistogramSet collect_histograms(Model& model, const Dataset& sample, int bins, int batch_size,
                                int sample_limit) {
    if (bins < 1) throw ConfigError("histogram bins must be >= 1");
    Probe probe = run_probe(model, sample, batch_size, sample_limit, true);
    HistogramSet set;
    for (const auto& l : probe.lifs) {
        LayerHistograms h;
        h.layer = l.name;
        double lo = 0, hi = 0;
        bool first = true;
        for (const auto& step : l.drive)
            for (float v : step) {
                if (first) {
                    lo = hi = v;
                    first = false;
                } else {
                    lo = std::min(lo, static_cast<double>(v));
                    hi = std::max(hi, static_cast<double>(v));
                }
            }
        h.lo = lo;
        h.hi = hi;
        h.bins = hi > lo ? bins : 1; // all-constant input degenerates to one bin
        const double width = h.bins > 1 ? (hi - lo) / h.bins : 1.0;
        for (const auto& step : l.drive) {
            std::vector<double> mass(static_cast<size_t>(h.bins), 0.0);
            for (float v : step) {
                int b = h.bins == 1 ? 0 : static_cast<int>((static_cast<double>(v) - lo) / width);
                b = std::clamp(b, 0, h.bins - 1);
                mass[static_cast<size_t>(b)] += 1.0;
            }
            const double total = static_cast<double>(step.size());
            if (total > 0)
                for (double& m : mass) m /= total;
            h.step_masses.push_back(std::move(mass));
        }
        set.layers.push_back(std::move(h));
    }
    return set;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw DimensionError("cosine_similarity: length mismatch " + std::to_string(a.size()) + " vs " +
                             std::to_string(b.size()));
    double dot = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0 || nb == 0) {
        std::cerr << "warning: cosine similarity of a zero mass vector, defining it as 0\n";
        return 0.0;
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<double> step_similarities(const LayerHistograms& h) {
    std::vector<double> out;
    for (size_t t = 1; t < h.step_masses.size(); ++t)
        out.push_back(cosine_similarity(h.step_masses[t], h.step_masses[0]));
    return out;
}

double layer_sensitivity(const LayerHistograms& h) {
    auto sims = step_similarities(h);
    if (sims.empty()) return 0.0;
    return 1.0 - *std::min_element(sims.begin(), sims.end());
}

void print_profile_table(const ProfileReport& r, std::ostream& os) {
    char line[256];
    os << "op                          S_avg      dense_flops        sops   exec_steps\n";
    for (const auto& o : r.ops) {
        if (!o.spike_input) {
            std::snprintf(line, sizeof(line), "%-24s %9s %16.0f %11s %12s\n", o.name.c_str(), "dense",
                          o.dense_flops, "-", "1");
        } else {
            std::snprintf(line, sizeof(line), "%-24s %9.4f %16.0f %11.1f %12.2f\n", o.name.c_str(), o.s_avg,
                          o.dense_flops, o.sops, o.executed_steps);
        }
        os << line;
    }
    std::snprintf(line, sizeof(line),
                  "t_avg %.4f | SA %.3f%% | FLOPs %.0f | SOPs %.1f | embed MACs %.0f\n", r.t_avg,
                  r.sa_percent, r.flops, r.sops, r.embed_macs);
    os << line;
    std::snprintf(line, sizeof(line),
                  "energy/inference: compute %.2f pJ, memory %.2f pJ, total %.2f pJ (MAC/AC ratio %.3f)\n",
                  r.compute_energy_pj, r.memory_energy_pj, r.total_energy_pj, r.energy.mac_ac_ratio());
    os << line;
}

void write_profile_csv(const ProfileReport& r, const std::string& path) {
    std::string csv = "kind,name,s_avg,dense_flops,sops,check_slots,scale_mults,executed_steps\n";
    char line[320];
    for (const auto& o : r.ops) {
        std::snprintf(line, sizeof(line), "op,%s,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", o.name.c_str(),
                      o.s_avg, o.dense_flops, o.sops, o.check_slots, o.scale_mults, o.executed_steps);
        csv += line;
    }
    for (const auto& l : r.layers) {
        std::snprintf(line, sizeof(line), "layer,%s,%.17g,%.17g,%.17g,0,0,%.17g\n", l.name.c_str(),
                      l.spikes_per_neuron, l.neurons, 0.0, l.active_steps);
        csv += line;
    }
    std::snprintf(line, sizeof(line),
                  "summary,total,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n", r.t_avg, r.flops, r.sops,
                  r.check_slots, r.scale_mults, r.sa_percent);
    csv += line;
    std::snprintf(line, sizeof(line), "energy,pj,%.17g,%.17g,%.17g,0,0,0\n", r.compute_energy_pj,
                  r.memory_energy_pj, r.total_energy_pj);
    csv += line;
    atomic_write(path, csv);
}

void print_sensitivity_table(const HistogramSet& h, std::ostream& os) {
    char buf[128];
    for (const auto& l : h.layers) {
        os << l.layer << ": ";
        auto sims = step_similarities(l);
        for (size_t t = 0; t < sims.size(); ++t) {
            std::snprintf(buf, sizeof(buf), "s%zu=%.4f ", t + 2, sims[t]);
            os << buf;
        }
        std::snprintf(buf, sizeof(buf), "| sensitivity %.4f\n", layer_sensitivity(l));
        os << buf;
    }
}

void write_sensitivity_csv(const HistogramSet& h, const std::string& path) {
    std::string csv = "layer,step,similarity_vs_step1,layer_sensitivity\n";
    char line[256];
    for (const auto& l : h.layers) {
        auto sims = step_similarities(l);
        const double sens = layer_sensitivity(l);
        for (size_t t = 0; t < sims.size(); ++t) {
            std::snprintf(line, sizeof(line), "%s,%zu,%.17g,%.17g\n", l.layer.c_str(), t + 2, sims[t], sens);
            csv += line;
        }
    }
    atomic_write(path, csv);
}

void write_histograms_csv(const HistogramSet& h, const std::string& path) {
    std::string csv = "layer,step,bin_lo,bin_hi,mass\n";
    char line[256];
    for (const auto& l : h.layers) {
        const double width = l.bins > 1 ? (l.hi - l.lo) / l.bins : 0.0;
        for (size_t t = 0; t < l.step_masses.size(); ++t)
            for (int b = 0; b < l.bins; ++b) {
                const double lo = l.lo + width * b;
                const double hi = b == l.bins - 1 ? l.hi : l.lo + width * (b + 1);
                std::snprintf(line, sizeof(line), "%s,%zu,%.17g,%.17g,%.17g\n", l.layer.c_str(), t + 1, lo,
                              hi, l.step_masses[t][static_cast<size_t>(b)]);
                csv += line;
            }
    }
    atomic_write(path, csv);
}

} // namespace dts
