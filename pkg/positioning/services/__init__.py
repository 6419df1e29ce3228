"""Protocol, channel and positioning services for the FTM simulator"""
