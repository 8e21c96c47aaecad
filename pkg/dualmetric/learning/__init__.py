"""Learning components of the dual metric model"""
