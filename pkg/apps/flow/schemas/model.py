"""Network configuration schemas"""

from pydantic import BaseModel, Field, model_validator


class ModelConfig(BaseModel):
    """Denoiser widths and depths (desk-scale defaults)."""

    seq_dim: int = Field(128, gt=0, description="Residue token width")
    pair_dim: int = Field(64, gt=0, description="Pair representation width")
    cond_dim: int = Field(128, gt=0, description="Conditioning vector width")
    n_heads: int = Field(4, gt=0)
    n_blocks: int = Field(6, gt=0)
    n_registers: int = Field(10, ge=0)
    n_pair_updates: int = Field(2, ge=0, description="0 disables pair-track updates")
    t_enc_dim: int = Field(64, gt=0)
    idx_enc_dim: int = Field(32, gt=0)
    fold_emb_dim: int = Field(32, gt=0, description="Embedding width per label level")
    ff_mult: int = Field(2, gt=0, description="SwiGLU hidden width as a multiple of seq_dim")
    tri_hidden_dim: int = Field(32, gt=0, description="Hidden width of triangle multiplicative updates")
    use_distogram_head: bool = True
    xt_bins: int = Field(64, ge=2, description="Distance bins for x_t pair features")
    xhat_bins: int = Field(128, ge=2, description="Distance bins for self-conditioning pair features")
    sep_bins: int = Field(127, ge=3, description="Sequence-separation bins")
    distogram_bins: int = Field(64, ge=2)
    pair_d_min: float = Field(1.0, gt=0.0, description="Å")
    pair_d_max: float = Field(30.0, gt=0.0, description="Å")
    coord_scale: float = Field(
        0.1, gt=0.0, description="Factor applied to Å coordinates before embedding"
    )
    n_c_classes: int = Field(0, ge=0, description="C-level vocabulary size")
    n_a_classes: int = Field(0, ge=0, description="A-level vocabulary size")
    n_t_classes: int = Field(0, ge=0, description="T-level vocabulary size")

    @model_validator(mode="after")
    def _consistent(self) -> "ModelConfig":
        if self.seq_dim % self.n_heads:
            raise ValueError(f"seq_dim {self.seq_dim} not divisible by n_heads {self.n_heads}")
        if self.n_pair_updates > self.n_blocks:
            raise ValueError("n_pair_updates cannot exceed n_blocks")
        if self.sep_bins % 2 == 0:
            raise ValueError("sep_bins must be odd so offset 0 has its own bin")
        if self.pair_d_min >= self.pair_d_max:
            raise ValueError("pair_d_min must be below pair_d_max")
        return self

    @property
    def head_dim(self) -> int:
        return self.seq_dim // self.n_heads

    @property
    def vocab_sizes(self) -> tuple[int, int, int]:
        return (self.n_c_classes, self.n_a_classes, self.n_t_classes)


class LoraConfig(BaseModel):
    rank: int = Field(16, gt=0)
    scale: float = Field(32.0, gt=0.0, description="alpha; effective multiplier is scale / rank")


class ClassifierConfig(BaseModel):
    """Relational graph classifier over Cα graphs."""

    hidden_dim: int = Field(64, gt=0)
    n_layers: int = Field(3, gt=0)
    dropout: float = Field(0.2, ge=0.0, lt=1.0)
    spatial_cutoff: float = Field(10.0, gt=0.0, description="Å")
    n_rbf: int = Field(16, gt=1)
    rbf_max: float = Field(20.0, gt=0.0, description="Å")
    max_relative_position: int = Field(8, gt=0)
    idx_enc_dim: int = Field(16, gt=0)
    n_c_classes: int = Field(1, gt=0)
    n_a_classes: int = Field(1, gt=0)
    n_t_classes: int = Field(1, gt=0)
    learning_rate: float = Field(1e-3, gt=0.0)
    batch_size: int = Field(16, gt=0)
    epochs: int = Field(30, gt=0)

    @property
    def vocab_sizes(self) -> tuple[int, int, int]:
        return (self.n_c_classes, self.n_a_classes, self.n_t_classes)
