"""
Chart generation
================
TIC curves with their plateau, raw versus aligned acquisitions, example
whole spectra per class and cross-validated metric bars. Every chart takes
a ``config`` dict of optional labels and filename and an ``output_dir``.
"""

import os

import matplotlib.pyplot as plt
import numpy as np
import seaborn as sns

from .evaluation import METRIC_LABELS, METRICS
from .models import DISPLAY_NAMES
from .pipeline import patient_spectra
from .preprocess import align_peaks
from .records import Label


def setup_plotting():
    """Configure matplotlib plotting settings"""
    plt.style.use('default')
    sns.set_theme(style="whitegrid")
    plt.rcParams['figure.figsize'] = (12, 8)
    plt.rcParams['font.size'] = 12


def _save(config, default_name, output_dir):
    filename = config.get('filename', default_name)
    filepath = os.path.join(output_dir, filename) if output_dir else filename
    plt.savefig(filepath, dpi=300, bbox_inches='tight')
    plt.close()
    return filepath


def create_tic_chart(patient, config, output_dir=None):
    """TIC curve per range with the plateau shaded and the averaged window marked"""
    print(f"\nCreating TIC Chart for {patient.patient_id}")
    print("=" * 60)

    ranges = list(patient.ranges.values())
    fig, axes = plt.subplots(len(ranges), 1, figsize=(12, 3.5 * len(ranges)), squeeze=False)
    for ax, processed in zip(axes[:, 0], ranges):
        selection = processed.selection
        x = np.arange(len(processed.tic))
        ax.plot(x, processed.tic, color=config.get('line_color', '#0000ff'), marker='o', linewidth=2,
                label='TIC')
        ax.axvspan(selection.plateau_start - 0.5, selection.plateau_end + 0.5, color='#008000', alpha=0.15,
                   label='Plateau')
        chosen = list(selection.chosen)
        ax.plot(chosen, processed.tic[chosen], 'o', color='#ff0000', markersize=9, label='Averaged window')
        ax.set_ylabel(f'TIC ({processed.range_id})', fontsize=12, fontweight='bold')
        ax.legend(loc='lower right', fontsize=10)
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel('Acquisition', fontsize=14, fontweight='bold')
    fig.suptitle(config.get('title', f'Total ion current of {patient.patient_id}'), fontsize=16,
                 fontweight='bold')
    plt.tight_layout()
    return _save(config, f'{patient.patient_id.lower()}_tic.png', output_dir)


def create_alignment_chart(raw, config, output_dir=None):
    """One raw acquisition against its integer-grid alignment"""
    print(f"\nCreating Alignment Chart for {raw.patient_id} {raw.range_id} #{raw.index}")
    print("=" * 60)

    aligned = align_peaks(raw, config.get('peak_floor', 1e-4))
    plt.figure(figsize=(14, 6))
    plt.plot(raw.mz, raw.intensity, color='#888888', linewidth=1.5, label='Raw samples')
    plt.vlines(aligned.mz, 0, aligned.intensities, color='#0000ff', linewidth=2, label='Aligned to integer m/z')
    plt.xlabel('m/z', fontsize=14, fontweight='bold')
    plt.ylabel('Intensity', fontsize=14, fontweight='bold')
    plt.title(config.get('title', f'Peak alignment, {raw.patient_id} {raw.range_id}'), fontsize=16,
              fontweight='bold')
    plt.legend(loc='upper right', fontsize=12)
    plt.grid(True, alpha=0.3)
    plt.tight_layout()
    return _save(config, f'{raw.patient_id.lower()}_{raw.range_id.lower()}_alignment.png', output_dir)


def create_spectra_chart(cohort, config, output_dir=None):
    """First retained patient of each class, averaged and filtered"""
    print("\nCreating Example Spectra Chart")
    print("=" * 60)

    spectra = dict(patient_spectra(cohort))
    examples = []
    for label in (Label.POSITIVE, Label.NEGATIVE):
        patient = next((p for p in cohort.patients if p.label is label), None)
        if patient is not None:
            examples.append((label, patient.patient_id, spectra[patient.patient_id]))
    if not examples:
        print("No retained patients to plot")
        return None

    colors = config.get('colors', {Label.POSITIVE: '#ff0000', Label.NEGATIVE: '#0000ff'})
    fig, axes = plt.subplots(len(examples), 1, figsize=(14, 4.5 * len(examples)), squeeze=False, sharex=True)
    for ax, (label, patient_id, spectrum) in zip(axes[:, 0], examples):
        ax.vlines(spectrum.mz, 0, spectrum.intensities, color=colors[label], linewidth=1.5)
        ax.set_title(f'{patient_id} ({label.serialize()})', fontsize=12)
        ax.set_ylabel('Normalized intensity', fontsize=12, fontweight='bold')
        ax.grid(True, alpha=0.3)
    axes[-1, 0].set_xlabel('m/z', fontsize=14, fontweight='bold')
    fig.suptitle(config.get('title', 'Example spectra'), fontsize=16, fontweight='bold')
    plt.tight_layout()
    return _save(config, 'example_spectra.png', output_dir)


def create_metrics_chart(report, config, output_dir=None):
    """Mean metric per model with population-std error bars"""
    print("\nCreating Metrics Chart")
    print("=" * 60)

    summary = report.summary()
    models = [m for m in config.get('models', report.models) if m in summary.index]
    metrics = config.get('metrics', METRICS)
    palette = sns.color_palette(config.get('palette', 'deep'), len(models))
    width = 0.8 / max(len(models), 1)
    x = np.arange(len(metrics))

    plt.figure(figsize=(14, 8))
    for i, model in enumerate(models):
        means = [summary.loc[model, ('mean', metric)] for metric in metrics]
        stds = [summary.loc[model, ('std', metric)] for metric in metrics]
        plt.bar(x + i * width - 0.4 + width / 2, means, width, yerr=stds, capsize=3, color=palette[i],
                label=DISPLAY_NAMES.get(model, model))
    plt.xticks(x, [METRIC_LABELS[m] for m in metrics])
    plt.ylim(0, 1.05)
    plt.ylabel('Mean over folds', fontsize=14, fontweight='bold')
    plt.title(config.get('title', 'Cross-validated metrics'), fontsize=16, fontweight='bold')
    plt.legend(loc='lower right', fontsize=11)
    plt.tight_layout()
    return _save(config, 'metrics.png', output_dir)
