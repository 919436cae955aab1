"""Figure rendering for reports and interaction-matrix dumps."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def plot_metric_bars(report, path, title="Ranking metrics"):
    names = list(report.metric_names)
    means = report.means
    fig, ax = plt.subplots(figsize=(1.2 * len(names) + 2, 4))
    ax.bar(range(len(names)), [means[n] for n in names], color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("mean over %d queries" % report.query_count)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_interaction_heatmaps(tensors, path):
    """2x2 grid of the S, G, A, C matrices with token-labeled axes."""
    q_tokens = tensors["q_tokens"]
    d_tokens = tensors["d_tokens"]
    fig, axes = plt.subplots(2, 2, figsize=(14, 10))
    for ax, name in zip(axes.ravel(), ("S", "G", "A", "C")):
        mat = tensors[name]
        im = ax.imshow(mat, aspect="auto", cmap="viridis")
        ax.set_title("matrix %s" % name)
        if len(d_tokens) <= 40:
            ax.set_xticks(range(len(d_tokens)))
            ax.set_xticklabels(d_tokens, rotation=90, fontsize=6)
        if len(q_tokens) <= 40:
            ax.set_yticks(range(len(q_tokens)))
            ax.set_yticklabels(q_tokens, fontsize=6)
        fig.colorbar(im, ax=ax)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_training_curve(history, path):
    epochs = [h["epoch"] for h in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    ax1.plot(epochs, [h["train_loss"] for h in history], color="#a84848")
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax2.plot(epochs, [h["valid_hit@3"] for h in history], label="valid HIT@3")
    ax2.plot(epochs, [h["valid_ndcg@3"] for h in history], label="valid NDCG@3")
    ax2.set_xlabel("epoch")
    ax2.set_ylim(0, 1)
    ax2.legend()
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
