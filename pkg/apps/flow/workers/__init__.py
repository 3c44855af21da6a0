"""Long-running jobs"""
