from sqlalchemy import Column, Integer, String, Float, DateTime, Text, ForeignKey, Enum, Boolean
from sqlalchemy.orm import relationship, declarative_base
from datetime import datetime
import enum

Base = declarative_base()

class Verdict(enum.Enum):
    ACCEPT = "accept"
    REJECT = "reject"

class QualityReport(Base):
    __tablename__ = "quality_reports"

    id = Column(Integer, primary_key=True, index=True)
    sequence = Column(String(255), nullable=False, index=True)
    source_path = Column(String(500), nullable=False)
    verdict = Column(Enum(Verdict), nullable=False)
    num_frames = Column(Integer)
    registration_ratio = Column(Float)
    fov_x = Column(Float)
    fov_y = Column(Float)
    valid_depth_fraction = Column(Float)
    median_max_parallax = Column(Float)
    linearity = Column(Float)
    noise_fraction = Column(Float)
    features_json = Column(Text, nullable=False)
    created_at = Column(DateTime, default=datetime.utcnow)

    # Relationships
    reasons = relationship("RejectionReason", back_populates="report", cascade="all, delete-orphan")

    def __repr__(self):
        return f"<QualityReport(id={self.id}, sequence='{self.sequence}', verdict='{self.verdict.value}')>"

class RejectionReason(Base):
    __tablename__ = "rejection_reasons"

    id = Column(Integer, primary_key=True, index=True)
    report_id = Column(Integer, ForeignKey("quality_reports.id"), nullable=False)
    code = Column(String(50), nullable=False)
    message = Column(String(500), nullable=False)

    # Relationships
    report = relationship("QualityReport", back_populates="reasons")

    def __repr__(self):
        return f"<RejectionReason(id={self.id}, report_id={self.report_id}, code='{self.code}')>"

class EvalResult(Base):
    __tablename__ = "eval_results"

    id = Column(Integer, primary_key=True, index=True)
    sequence = Column(String(255), nullable=False, index=True)
    auc_3 = Column(Float)
    auc_30 = Column(Float)
    abs_rel = Column(Float)
    delta = Column(Float)
    point_error = Column(Float)
    excluded_pairs = Column(Integer, default=0)
    succeeded = Column(Boolean, default=True)
    error = Column(Text)
    created_at = Column(DateTime, default=datetime.utcnow)

    def __repr__(self):
        return f"<EvalResult(id={self.id}, sequence='{self.sequence}', auc_3={self.auc_3})>"
